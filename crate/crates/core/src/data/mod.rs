//! Synthetic classification data with known noise provenance.

mod augment;
mod blobs;
mod io;
mod noise;

use serde::{Deserialize, Serialize};

pub use augment::{augment, augment_with, AugmentParams, Strength};
pub use blobs::{make_blobs, BlobSpec};
pub use io::{load_dir, read_samples, save_dir, write_samples, DatasetMeta, TEST_FILE, TRAIN_FILE, META_FILE};
pub use noise::{corrupt, inject_id_noise, inject_ood_noise, IdNoiseMode, NoiseConfig, NoisePreset, OodParams};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    IdNoise,
    OodNoise,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Clean => "clean",
            Provenance::IdNoise => "id_noise",
            Provenance::OodNoise => "ood_noise",
        }
    }

    pub fn is_noisy(self) -> bool {
        self != Provenance::Clean
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clean" => Ok(Provenance::Clean),
            "id_noise" => Ok(Provenance::IdNoise),
            "ood_noise" => Ok(Provenance::OodNoise),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub given_label: usize,
    /// `None` marks an out-of-distribution sample.
    pub true_label: Option<usize>,
    pub provenance: Provenance,
}

impl LabeledSample {
    pub fn clean(features: Vec<f64>, label: usize) -> Self {
        Self {
            features,
            given_label: label,
            true_label: Some(label),
            provenance: Provenance::Clean,
        }
    }
}

/// A split of labeled samples plus the generating geometry, which the OOD
/// injector uses to place its distribution away from every class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub dim: usize,
    /// Per-class mean of the generating distribution.
    pub class_means: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation of each class.
    pub sigma: f64,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn given_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.given_label).collect()
    }

    pub fn true_labels(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.true_label).collect()
    }

    pub fn provenance(&self) -> Vec<Provenance> {
        self.samples.iter().map(|s| s.provenance).collect()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.samples.iter().filter(|s| s.provenance == p).count()
    }

    /// Checks the provenance/label invariants of every sample.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.dim {
                return Err(Error::Contract(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    self.dim
                )));
            }
            if s.given_label >= self.classes {
                return Err(Error::Contract(format!("sample {i} label out of range")));
            }
            let ok = match s.provenance {
                Provenance::Clean => s.true_label == Some(s.given_label),
                Provenance::IdNoise => matches!(s.true_label, Some(t) if t != s.given_label && t < self.classes),
                Provenance::OodNoise => s.true_label.is_none(),
            };
            if !ok {
                return Err(Error::Contract(format!(
                    "sample {i}: provenance {:?} inconsistent with labels",
                    s.provenance
                )));
            }
        }
        Ok(())
    }
}
