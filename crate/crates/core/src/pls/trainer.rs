use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{
    build_contrastive_labels, class_balance_reg, classification_loss, contrastive_loss, mixup_batch, one_hot,
};
use super::selection::{
    augment_rows, compute_w, confidence_w, detect_noise, guess_pseudo_labels, pseudo_labels_from_views,
    pseudo_loss_from_probs, small_loss_scan,
};
use super::{cosine_lr, EpochState, Selection, TrainConfig};
use crate::data::{Dataset, Provenance, Strength};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auc, pseudo_correctness};
use crate::model::{Dims, Network, Sgd};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Graph, Tensor};

/// Metrics logged once per epoch. Quantities that need a detection pass are
/// `NaN` during warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub l_classif: f64,
    pub l_cont: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Retrieval AUC of noisy samples ranked by small loss.
    pub noise_auc: f64,
    /// Retrieval AUC of correct pseudo-labels ranked by negated pseudo-loss.
    pub pseudo_auc: f64,
    pub frac_detected_noisy: f64,
    /// Mean `w` over detected-noisy samples.
    pub mean_w: f64,
    /// Mean `w` over detected-noisy OOD samples.
    pub mean_w_ood: f64,
    /// Mean `w` over detected-noisy ID samples whose pseudo-label is right.
    pub mean_w_id_correct: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,lr,l_classif,l_cont,train_acc,test_acc,noise_auc,pseudo_auc,frac_detected_noisy,mean_w";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.l_classif,
            self.l_cont,
            self.train_acc,
            self.test_acc,
            self.noise_auc,
            self.pseudo_auc,
            self.frac_detected_noisy,
            self.mean_w
        )
    }
}

/// Pseudo-losses of detected-noisy samples at one epoch, for histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLossSnapshot {
    pub epoch: usize,
    pub pseudo_loss: Vec<f64>,
    /// Whether the pseudo-label's argmax matches the true label; `None` for
    /// OOD samples.
    pub correct: Vec<Option<bool>>,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochMetrics>,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
    /// Number of mixture fits performed (stage one plus stage two).
    pub gmm_fits: usize,
    pub snapshots: Vec<PseudoLossSnapshot>,
    pub network: Network<T>,
}

impl<T> TrainReport<T> {
    pub fn csv(&self) -> String {
        let mut out = String::from(EpochMetrics::CSV_HEADER);
        out.push('\n');
        for m in &self.epochs {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Interval, in epochs, between pseudo-loss snapshots.
pub const SNAPSHOT_EVERY: usize = 10;

/// Training state for one run. Holds the network, the optimizer and the
/// single random stream every stochastic choice draws from.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig,
    net: Network<T>,
    opt: Sgd<T>,
    rng: ChaCha8Rng,
    classes: usize,
    train_x: Tensor<T>,
    given: Vec<usize>,
    true_labels: Vec<Option<usize>>,
    provenance: Vec<Provenance>,
    test_x: Tensor<T>,
    test_y: Vec<usize>,
    gmm_fits: usize,
    warnings: usize,
}

fn features<T: Scalar>(ds: &Dataset) -> Result<Tensor<T>> {
    let rows: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
    Tensor::from_f64_rows(&rows)
}

fn mean_of<T: Scalar>(values: impl Iterator<Item = T>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.to_f64_lossy(), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, train: &Dataset, test: &Dataset) -> Result<Self> {
        config.validate()?;
        if train.len() < config.batch_size {
            return Err(Error::Config(format!(
                "training set ({}) smaller than one batch ({})",
                train.len(),
                config.batch_size
            )));
        }
        if test.is_empty() {
            return Err(Error::Config("empty test split".into()));
        }
        if train.dim != test.dim || train.classes != test.classes {
            return Err(Error::Config("train and test splits disagree on shape".into()));
        }
        let dims = Dims::new(train.dim, config.hidden, train.classes, config.proj_dim);
        let net = Network::init(dims, config.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(7);
        let test_y = test
            .samples
            .iter()
            .map(|s| s.true_label.ok_or_else(|| Error::Config("test split contains OOD samples".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            opt: Sgd::new(config.momentum, config.weight_decay),
            net,
            rng,
            classes: train.classes,
            train_x: features(train)?,
            given: train.given_labels(),
            true_labels: train.true_labels(),
            provenance: train.provenance(),
            test_x: features(test)?,
            test_y,
            gmm_fits: 0,
            warnings: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn gmm_fits(&self) -> usize {
        self.gmm_fits
    }

    /// Count of non-fatal loss warnings so far.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    /// Stage one and stage two over the whole training set: small loss,
    /// clean mask, pseudo-labels from two fresh weak views, pseudo-loss and
    /// `w` (according to the configured selection rule).
    pub fn scan(&mut self) -> Result<EpochState<T>> {
        let small_loss = small_loss_scan(&self.net, &self.train_x, &self.given)?;
        let detection = detect_noise(&small_loss, self.config.gmm_threshold, &self.config.gmm)?;
        self.gmm_fits += 1;

        let pseudo = guess_pseudo_labels(
            &self.net,
            &self.train_x,
            self.config.pseudo_exponent,
            &self.config.augment,
            &mut self.rng,
        )?;
        let (probs, _) = self.net.forward_probs(&self.train_x)?;
        let pseudo_loss = pseudo_loss_from_probs(&probs, &pseudo.labels)?;
        let w = match self.config.selection {
            Selection::Gmm => {
                let (w, fit) = compute_w(&pseudo_loss, &detection.clean_mask, &self.config.gmm)?;
                self.gmm_fits += usize::from(fit.is_some());
                w
            }
            Selection::Confidence { threshold } => {
                confidence_w(&pseudo.confidence, &detection.clean_mask, threshold)
            }
        };
        Ok(EpochState {
            small_loss,
            clean_mask: detection.clean_mask,
            pseudo_label: pseudo.labels,
            confidence: pseudo.confidence,
            pseudo_loss,
            w,
        })
    }

    fn is_warmup(&self, epoch: usize) -> bool {
        epoch < self.config.warmup_epochs
    }

    /// Runs one epoch: scans, then one SGD step per full minibatch, then
    /// evaluation.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<(EpochMetrics, Option<EpochState<T>>)> {
        let lr = cosine_lr(epoch, &self.config)?;
        let n = self.train_x.rows();

        let small_loss = small_loss_scan(&self.net, &self.train_x, &self.given)?;
        let noisy_flags: Vec<bool> = self.provenance.iter().map(|p| p.is_noisy()).collect();
        let noise_auc = auc(&small_loss, &noisy_flags).unwrap_or(f64::NAN);

        let state = if self.is_warmup(epoch) {
            None
        } else {
            Some(self.scan()?)
        };

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let b = self.config.batch_size;
        let (mut sum_classif, mut sum_cont, mut steps) = (0.0, 0.0, 0usize);
        for batch in order.chunks_exact(b) {
            let (lc, lt) = match &state {
                Some(s) if self.config.enable_correction || self.config.enable_contrastive => {
                    self.pls_step(batch, s, lr)?
                }
                _ => (self.mixup_step(batch, lr)?, 0.0),
            };
            sum_classif += lc;
            sum_cont += lt;
            steps += 1;
        }

        let (train_probs, _) = self.net.forward_probs(&self.train_x)?;
        let train_acc = accuracy(&train_probs.argmax_rows(), &self.given)?;
        let (test_probs, _) = self.net.forward_probs(&self.test_x)?;
        let test_acc = accuracy(&test_probs.argmax_rows(), &self.test_y)?;

        let mut metrics = EpochMetrics {
            epoch,
            lr,
            l_classif: sum_classif / steps.max(1) as f64,
            l_cont: sum_cont / steps.max(1) as f64,
            train_acc,
            test_acc,
            noise_auc,
            pseudo_auc: f64::NAN,
            frac_detected_noisy: f64::NAN,
            mean_w: f64::NAN,
            mean_w_ood: f64::NAN,
            mean_w_id_correct: f64::NAN,
        };
        if let Some(s) = &state {
            let noisy: Vec<usize> = (0..n).filter(|&i| !s.clean_mask[i]).collect();
            metrics.frac_detected_noisy = noisy.len() as f64 / n as f64;
            metrics.mean_w = mean_of(noisy.iter().map(|&i| s.w[i]));
            metrics.mean_w_ood = mean_of(
                noisy
                    .iter()
                    .filter(|&&i| self.provenance[i] == Provenance::OodNoise)
                    .map(|&i| s.w[i]),
            );
            metrics.mean_w_id_correct = mean_of(
                noisy
                    .iter()
                    .filter(|&&i| {
                        self.provenance[i] == Provenance::IdNoise
                            && self.true_labels[i] == Some(argmax(s.pseudo_label.row(i)))
                    })
                    .map(|&i| s.w[i]),
            );
            metrics.pseudo_auc = pseudo_correctness(s, &self.true_labels, &self.provenance)
                .and_then(|task| task.auc())
                .unwrap_or(f64::NAN);
        }
        Ok((metrics, state))
    }

    /// Runs every epoch and collects the report.
    pub fn run(mut self) -> Result<TrainReport<T>> {
        let mut epochs = Vec::with_capacity(self.config.epochs);
        let mut snapshots = Vec::new();
        for epoch in 0..self.config.epochs {
            let (metrics, state) = self.train_epoch(epoch)?;
            if let Some(s) = state {
                if (epoch - self.config.warmup_epochs).is_multiple_of(SNAPSHOT_EVERY) {
                    snapshots.push(self.snapshot(epoch, &s));
                }
            }
            epochs.push(metrics);
        }
        let best_test_acc = epochs.iter().map(|m| m.test_acc).fold(f64::NEG_INFINITY, f64::max);
        let final_test_acc = epochs.last().map_or(f64::NAN, |m| m.test_acc);
        Ok(TrainReport {
            epochs,
            best_test_acc,
            final_test_acc,
            gmm_fits: self.gmm_fits,
            snapshots,
            network: self.net,
        })
    }

    fn snapshot(&self, epoch: usize, s: &EpochState<T>) -> PseudoLossSnapshot {
        let mut snap = PseudoLossSnapshot {
            epoch,
            pseudo_loss: Vec::new(),
            correct: Vec::new(),
        };
        for i in (0..s.len()).filter(|&i| !s.clean_mask[i]) {
            snap.pseudo_loss.push(s.pseudo_loss[i].to_f64_lossy());
            snap.correct
                .push(self.true_labels[i].map(|t| t == argmax(s.pseudo_label.row(i))));
        }
        snap
    }

    fn random_perm(&mut self, b: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(&mut self.rng);
        perm
    }

    fn apply(&mut self, graph: &mut Graph<T>, vars: &crate::model::NetworkVars, loss: crate::tensor::Var, lr: f64) -> Result<()> {
        graph.backward(loss)?;
        let grads = self.net.collect_grads(graph, vars);
        self.opt.step(&mut self.net, &grads, lr)
    }

    /// Warmup / baseline step: mixup cross-entropy on the given labels of a
    /// weak view.
    fn mixup_step(&mut self, batch: &[usize], lr: f64) -> Result<f64> {
        let x = augment_rows(
            &self.train_x.select_rows(batch),
            Strength::Weak,
            &self.config.augment,
            &mut self.rng,
        );
        let labels: Vec<usize> = batch.iter().map(|&i| self.given[i]).collect();
        let y = one_hot::<T>(&labels, self.classes);
        let w = vec![T::one(); batch.len()];
        let lambda: f64 = self.rng.random();
        let perm = self.random_perm(batch.len());
        let (x_mix, y_mix, w_mix) = mixup_batch(&x, &y, &w, lambda, &perm)?;

        let mut graph = Graph::new();
        let vars = self.net.bind(&mut graph);
        let xv = graph.constant(x_mix);
        let (probs, _) = vars.forward(&mut graph, xv)?;
        let (l_classif, _) = classification_loss(&mut graph, probs, &y_mix, &w_mix)?;
        let total = self.with_class_reg(&mut graph, l_classif, probs)?;
        let value = graph.value(l_classif).item()?.to_f64_lossy();
        self.apply(&mut graph, &vars, total, lr)?;
        Ok(value)
    }

    fn with_class_reg(
        &mut self,
        graph: &mut Graph<T>,
        loss: crate::tensor::Var,
        probs: crate::tensor::Var,
    ) -> Result<crate::tensor::Var> {
        if self.config.class_reg_weight == 0.0 {
            return Ok(loss);
        }
        let reg = class_balance_reg(graph, probs)?;
        let reg = graph.scale(reg, T::of(self.config.class_reg_weight));
        graph.add(loss, reg)
    }

    /// One correction step: guessed labels replace detected-noisy targets,
    /// weighted mixup cross-entropy plus the interpolated contrastive loss.
    fn pls_step(&mut self, batch: &[usize], state: &EpochState<T>, lr: f64) -> Result<(f64, f64)> {
        let cfg = self.config.clone();
        let bsz = batch.len();
        let x = self.train_x.select_rows(batch);
        let x1 = augment_rows(&x, Strength::Weak, &cfg.augment, &mut self.rng);
        let x2 = augment_rows(&x, Strength::Weak, &cfg.augment, &mut self.rng);
        let (p1, _) = self.net.forward_probs(&x1)?;
        let (p2, _) = self.net.forward_probs(&x2)?;
        let guessed = pseudo_labels_from_views(&p1, &p2, cfg.pseudo_exponent)?.labels;

        let given: Vec<usize> = batch.iter().map(|&i| self.given[i]).collect();
        let mut targets = one_hot::<T>(&given, self.classes);
        let mut w = vec![T::one(); bsz];
        if cfg.enable_correction {
            for (r, &i) in batch.iter().enumerate() {
                if !state.clean_mask[i] {
                    targets.row_mut(r).copy_from_slice(guessed.row(r));
                    if cfg.enable_w {
                        w[r] = state.w[i];
                    }
                }
            }
        }

        let lambda: f64 = self.rng.random();
        let perm = self.random_perm(bsz);
        let (x_mix, y_mix, w_mix) = mixup_batch(&x1, &targets, &w, lambda, &perm)?;

        let mut graph = Graph::new();
        let vars = self.net.bind(&mut graph);
        let xv = graph.constant(x_mix);
        let (probs, _) = vars.forward(&mut graph, xv)?;
        let (l_classif, warn) = classification_loss(&mut graph, probs, &y_mix, &w_mix)?;
        self.warnings += usize::from(warn.is_some());
        let mut total = self.with_class_reg(&mut graph, l_classif, probs)?;

        let mut cont_value = 0.0;
        if cfg.enable_contrastive {
            let hard: Vec<usize> = (0..bsz).map(|r| argmax(targets.row(r))).collect();
            let w_cont: Vec<T> = if cfg.w_in_contrastive {
                w.clone()
            } else {
                vec![T::one(); bsz]
            };
            let y_cont = build_contrastive_labels(&one_hot::<T>(&hard, self.classes), &w_cont)?;
            let strong = augment_rows(&x, Strength::Strong, &cfg.augment, &mut self.rng);
            let beta: f64 = self.rng.random();
            let perm2 = self.random_perm(bsz);
            let (l_cont, warn) = contrastive_loss(
                &mut graph,
                &vars,
                &x1,
                &strong,
                &y_cont,
                beta,
                &perm2,
                cfg.contrastive_temperature,
            )?;
            self.warnings += usize::from(warn.is_some());
            cont_value = graph.value(l_cont).item()?.to_f64_lossy();
            total = graph.add(total, l_cont)?;
        }
        let classif_value = graph.value(l_classif).item()?.to_f64_lossy();
        self.apply(&mut graph, &vars, total, lr)?;
        Ok((classif_value, cont_value))
    }
}

/// Trains from scratch and returns the full report.
pub fn run_training<T: Scalar>(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainReport<T>> {
    Trainer::new(config.clone(), train, test)?.run()
}
