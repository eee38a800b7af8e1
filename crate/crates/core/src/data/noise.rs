use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdNoiseMode {
    /// Flip to a uniformly drawn different class.
    Symmetric,
    /// Flip class `c` to `(c + 1) mod C`.
    Asymmetric,
}

impl std::str::FromStr for IdNoiseMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "asymmetric" => Ok(Self::Asymmetric),
            other => Err(format!("unknown noise mode {other:?}")),
        }
    }
}

/// Out-of-distribution source: an isotropic Gaussian whose mean lies at least
/// `offset` class standard deviations from every class mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodParams {
    /// Minimum distance to any class mean, in units of the class sigma.
    pub offset: f64,
    /// Standard deviation relative to the class sigma.
    pub scale: f64,
}

impl OodParams {
    /// Far, compact source standing in for an unrelated image corpus.
    pub const FAR: Self = Self {
        offset: 20.0,
        scale: 0.5,
    };
    /// Closer source modelling web-crawled noise.
    pub const WEB: Self = Self {
        offset: 5.0,
        scale: 1.5,
    };
}

impl Default for OodParams {
    fn default() -> Self {
        Self::FAR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    /// OOD samples from the far source.
    Imagenet,
    /// OOD samples from the close source; training turns on class-balance
    /// regularization for this preset.
    Web,
}

impl NoisePreset {
    pub fn ood_params(self) -> OodParams {
        match self {
            NoisePreset::Imagenet => OodParams::FAR,
            NoisePreset::Web => OodParams::WEB,
        }
    }
}

impl std::str::FromStr for NoisePreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "imagenet" => Ok(Self::Imagenet),
            "web" => Ok(Self::Web),
            other => Err(format!("unknown preset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub r_in: f64,
    pub r_out: f64,
    pub id_mode: IdNoiseMode,
    pub ood: OodParams,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(r_in: f64, r_out: f64, id_mode: IdNoiseMode, seed: u64) -> Self {
        Self {
            r_in,
            r_out,
            id_mode,
            ood: OodParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| (0.0..=1.0).contains(&v);
        if !frac(self.r_in) || !frac(self.r_out) {
            return Err(Error::Config(format!(
                "noise ratios must lie in [0, 1] (r_in={}, r_out={})",
                self.r_in, self.r_out
            )));
        }
        if self.r_in + self.r_out > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "r_in + r_out must not exceed 1 (got {})",
                self.r_in + self.r_out
            )));
        }
        if !(self.ood.offset >= 0.0) || !(self.ood.scale > 0.0) {
            return Err(Error::Config("OOD offset must be >= 0 and scale > 0".into()));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn clean_indices(dataset: &Dataset) -> Vec<usize> {
    (0..dataset.len())
        .filter(|&i| dataset.samples[i].provenance == Provenance::Clean)
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, pool: &[usize], count: usize) -> Result<Vec<usize>> {
    if count > pool.len() {
        return Err(Error::Config(format!(
            "need {count} clean samples to corrupt but only {} remain",
            pool.len()
        )));
    }
    let mut chosen: Vec<usize> = index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Flips the labels of exactly `round(r_in * N)` clean samples chosen
/// uniformly at random.
pub fn inject_id_noise(dataset: &Dataset, r_in: f64, mode: IdNoiseMode, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&r_in) {
        return Err(Error::Config(format!("r_in={r_in} outside [0, 1]")));
    }
    let mut out = dataset.clone();
    let count = (r_in * dataset.len() as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, 1);
    let chosen = pick(&mut rng, &clean_indices(dataset), count)?;
    let c = dataset.classes;
    for i in chosen {
        let s = &mut out.samples[i];
        let truth = s.given_label;
        s.given_label = match mode {
            IdNoiseMode::Symmetric => {
                let k = rng.random_range(0..c - 1);
                if k >= truth {
                    k + 1
                } else {
                    k
                }
            }
            IdNoiseMode::Asymmetric => (truth + 1) % c,
        };
        s.provenance = Provenance::IdNoise;
    }
    Ok(out)
}

/// Mean of the OOD source: pushed out from the centroid of the class means
/// by their largest radius plus the requested offset, so that every class
/// mean is at least `offset * sigma` away. With three or more dimensions the
/// push is along the third axis; in two dimensions it bisects the first two
/// class means.
fn ood_mean(dataset: &Dataset, params: &OodParams) -> Vec<f64> {
    let d = dataset.dim;
    let k = dataset.class_means.len().max(1) as f64;
    let mut center = vec![0.0; d];
    for m in &dataset.class_means {
        for (c, v) in center.iter_mut().zip(m) {
            *c += v / k;
        }
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let radius = dataset
        .class_means
        .iter()
        .map(|m| dist(m, &center))
        .fold(0.0, f64::max);

    let mut dir = vec![0.0; d];
    if d >= 3 {
        dir[2] = 1.0;
    } else if dataset.class_means.len() >= 2 {
        for j in 0..d {
            dir[j] = dataset.class_means[0][j] + dataset.class_means[1][j] - 2.0 * center[j];
        }
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-12 {
            // Two antipodal classes: go perpendicular to them.
            let a: Vec<f64> = (0..d).map(|j| dataset.class_means[0][j] - center[j]).collect();
            dir = vec![-a[1], a[0]];
        }
    } else {
        dir[0] = 1.0;
    }
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let reach = radius + params.offset * dataset.sigma;
    center.iter().zip(&dir).map(|(c, u)| c + reach * u / n).collect()
}

/// Replaces the features of exactly `round(r_out * N)` still-clean samples
/// by draws from the OOD source; their given labels are kept.
pub fn inject_ood_noise(dataset: &Dataset, r_out: f64, params: &OodParams, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&r_out) {
        return Err(Error::Config(format!("r_out={r_out} outside [0, 1]")));
    }
    let mut out = dataset.clone();
    let count = (r_out * dataset.len() as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, 2);
    let chosen = pick(&mut rng, &clean_indices(dataset), count)?;
    let mean = ood_mean(dataset, params);
    let noise = Normal::new(0.0, params.scale * dataset.sigma)
        .map_err(|e| Error::Config(format!("OOD scale: {e}")))?;
    for i in chosen {
        let s = &mut out.samples[i];
        s.features = mean.iter().map(|&m| m + noise.sample(&mut rng)).collect();
        s.true_label = None;
        s.provenance = Provenance::OodNoise;
    }
    Ok(out)
}

/// Applies in-distribution then out-of-distribution corruption on disjoint
/// samples.
pub fn corrupt(dataset: &Dataset, config: &NoiseConfig) -> Result<Dataset> {
    config.validate()?;
    let noisy = inject_id_noise(dataset, config.r_in, config.id_mode, config.seed)?;
    inject_ood_noise(&noisy, config.r_out, &config.ood, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobSpec};

    fn base(c: usize, d: usize, n: usize) -> Dataset {
        make_blobs(&BlobSpec::new(c, d, n, 6.0), 0).unwrap().0
    }

    #[test]
    fn zero_rates_are_identity() {
        let ds = base(3, 2, 50);
        assert_eq!(inject_id_noise(&ds, 0.0, IdNoiseMode::Symmetric, 1).unwrap(), ds);
        assert_eq!(inject_ood_noise(&ds, 0.0, &OodParams::FAR, 1).unwrap(), ds);
    }

    #[test]
    fn full_binary_flip() {
        let ds = base(2, 2, 50);
        let noisy = inject_id_noise(&ds, 1.0, IdNoiseMode::Symmetric, 4).unwrap();
        assert!(noisy.samples.iter().all(|s| Some(s.given_label) != s.true_label));
        noisy.validate().unwrap();
    }

    #[test]
    fn exact_counts() {
        let ds = base(4, 3, 250);
        let noisy = inject_id_noise(&ds, 0.4, IdNoiseMode::Symmetric, 2).unwrap();
        assert_eq!(noisy.count(Provenance::IdNoise), 400);
        let ood = inject_ood_noise(&ds, 0.4, &OodParams::FAR, 2).unwrap();
        assert_eq!(ood.count(Provenance::OodNoise), 400);
        assert!(ood.samples.iter().all(|s| s.given_label < 4));
    }

    #[test]
    fn asymmetric_is_cyclic() {
        let ds = base(5, 2, 40);
        let noisy = inject_id_noise(&ds, 0.5, IdNoiseMode::Asymmetric, 3).unwrap();
        for s in noisy.samples.iter().filter(|s| s.provenance == Provenance::IdNoise) {
            assert_eq!(s.given_label, (s.true_label.unwrap() + 1) % 5);
        }
    }

    #[test]
    fn combined_corruption_is_disjoint() {
        let ds = base(3, 2, 1000);
        let cfg = NoiseConfig::new(0.2, 0.4, IdNoiseMode::Symmetric, 8);
        let noisy = corrupt(&ds, &cfg).unwrap();
        assert_eq!(noisy.count(Provenance::IdNoise), 600);
        assert_eq!(noisy.count(Provenance::OodNoise), 1200);
        assert_eq!(noisy.count(Provenance::Clean), 1200);
        noisy.validate().unwrap();
    }

    #[test]
    fn ood_mean_keeps_its_distance() {
        for (c, d) in [(2, 2), (3, 2), (5, 2), (3, 3), (4, 6)] {
            let ds = base(c, d, 2);
            let m = ood_mean(&ds, &OodParams { offset: 5.0, scale: 1.0 });
            for cm in &ds.class_means {
                let dist: f64 = cm.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist >= 5.0 - 1e-9, "C={c} d={d}: {dist}");
            }
        }
    }

    #[test]
    fn rejects_overfull_corruption() {
        let ds = base(3, 2, 10);
        assert!(corrupt(&ds, &NoiseConfig::new(0.7, 0.5, IdNoiseMode::Symmetric, 0)).is_err());
        assert!(corrupt(&ds, &NoiseConfig::new(-0.1, 0.0, IdNoiseMode::Symmetric, 0)).is_err());
    }
}
