use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Weak,
    Strong,
}

/// Feature-space stand-ins for image augmentations. Noise levels are
/// absolute; defaults assume a class sigma of 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    pub scale_low: f64,
    pub scale_high: f64,
    pub drop_prob: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            sigma_weak: 0.1,
            sigma_strong: 0.3,
            scale_low: 0.8,
            scale_high: 1.2,
            drop_prob: 0.1,
        }
    }
}

impl AugmentParams {
    pub fn for_sigma(sigma: f64) -> Self {
        let d = Self::default();
        Self {
            sigma_weak: d.sigma_weak * sigma,
            sigma_strong: d.sigma_strong * sigma,
            ..d
        }
    }
}

/// Weak: isotropic jitter. Strong: per-coordinate scaling, coordinate
/// dropout, then a larger jitter.
pub fn augment_with<R: Rng + ?Sized>(x: &[f64], strength: Strength, params: &AugmentParams, rng: &mut R) -> Vec<f64> {
    match strength {
        Strength::Weak => x
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                v + params.sigma_weak * z
            })
            .collect(),
        Strength::Strong => x
            .iter()
            .map(|&v| {
                let scaled = v * rng.random_range(params.scale_low..=params.scale_high);
                let kept = if rng.random::<f64>() < params.drop_prob { 0.0 } else { scaled };
                let z: f64 = StandardNormal.sample(rng);
                kept + params.sigma_strong * z
            })
            .collect(),
    }
}

pub fn augment(x: &[f64], strength: Strength, params: &AugmentParams, seed: u64) -> Vec<f64> {
    augment_with(x, strength, params, &mut ChaCha8Rng::seed_from_u64(seed))
}
