//! Two-stage noise detection, pseudo-label correction and the training loop.

mod config;
mod losses;
mod schedule;
mod selection;
mod trainer;

pub use config::{Selection, TrainConfig};
pub use losses::{
    build_contrastive_labels, class_balance_reg, classification_loss, contrastive_loss,
    contrastive_loss_from_embeddings, interpolate_rows, mixup_batch, one_hot, LossWarning,
};
pub use schedule::cosine_lr;
pub use selection::{
    augment_rows, compute_w, confidence_w, detect_noise, guess_pseudo_labels, losses_from_probs,
    pseudo_labels_from_views, pseudo_loss, pseudo_loss_from_probs, sharpen_pseudo_labels, small_loss_scan,
    Detection, PseudoLabels,
};
pub use trainer::{run_training, EpochMetrics, PseudoLossSnapshot, TrainReport, Trainer, SNAPSHOT_EVERY};

use crate::tensor::Tensor;

/// Per-sample quantities computed over the whole training set at the start of
/// an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochState<T> {
    pub small_loss: Vec<T>,
    pub clean_mask: Vec<bool>,
    pub pseudo_label: Tensor<T>,
    pub confidence: Vec<T>,
    pub pseudo_loss: Vec<T>,
    pub w: Vec<T>,
}

impl<T> EpochState<T> {
    pub fn len(&self) -> usize {
        self.clean_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_mask.is_empty()
    }
}
