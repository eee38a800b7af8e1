use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};

/// Isotropic Gaussian blobs with class means spread evenly on a circle in the
/// first two coordinates. Adjacent means are exactly `separation` apart, which
/// is also the smallest pairwise distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub n_test_per_class: usize,
    pub separation: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    1.0
}

impl BlobSpec {
    pub fn new(classes: usize, dim: usize, n_per_class: usize, separation: f64) -> Self {
        Self {
            classes,
            dim,
            n_per_class,
            n_test_per_class: n_per_class,
            separation,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("need at least 2 feature dimensions".into()));
        }
        if self.n_per_class < 2 || self.n_test_per_class < 2 {
            return Err(Error::Config("need at least 2 samples per class".into()));
        }
        if !(self.separation > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config("separation and sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let c = self.classes as f64;
        let radius = self.separation / (2.0 * (std::f64::consts::PI / c).sin());
        (0..self.classes)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / c;
                let mut m = vec![0.0; self.dim];
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
                m
            })
            .collect()
    }
}

/// Draws a train/test pair. Both splits carry clean labels; samples are
/// interleaved by class so every prefix is near-balanced.
pub fn make_blobs(spec: &BlobSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let means = spec.class_means();
    let noise = Normal::new(0.0, spec.sigma).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut draw = |per_class: usize| -> Vec<LabeledSample> {
        let mut out = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (label, mean) in means.iter().enumerate() {
                let features = mean.iter().map(|&m| m + noise.sample(&mut rng)).collect();
                out.push(LabeledSample::clean(features, label));
            }
        }
        out
    };
    let train = draw(spec.n_per_class);
    let test = draw(spec.n_test_per_class);

    let wrap = |samples| Dataset {
        classes: spec.classes,
        dim: spec.dim,
        class_means: means.clone(),
        sigma: spec.sigma,
        samples,
    };
    Ok((wrap(train), wrap(test)))
}
