//! Line-oriented dataset files.
//!
//! One sample per line: comma-separated features, then the given label, the
//! true label (`-1` for out-of-distribution) and the provenance tag
//! (`clean`, `id_noise`, `ood_noise`). No header. A JSON sidecar carries the
//! class count, geometry and generation parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlobSpec, Dataset, LabeledSample, NoiseConfig, NoisePreset, Provenance};
use crate::error::{Error, Result};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const META_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub classes: usize,
    pub dim: usize,
    pub sigma: f64,
    pub class_means: Vec<Vec<f64>>,
    pub blobs: Option<BlobSpec>,
    pub noise: Option<NoiseConfig>,
    pub preset: Option<NoisePreset>,
    pub blob_seed: Option<u64>,
    pub train_size: usize,
    pub test_size: usize,
    pub id_noisy: usize,
    pub ood_noisy: usize,
}

impl DatasetMeta {
    pub fn describe(train: &Dataset, test: &Dataset) -> Self {
        Self {
            classes: train.classes,
            dim: train.dim,
            sigma: train.sigma,
            class_means: train.class_means.clone(),
            blobs: None,
            noise: None,
            preset: None,
            blob_seed: None,
            train_size: train.len(),
            test_size: test.len(),
            id_noisy: train.count(Provenance::IdNoise),
            ood_noisy: train.count(Provenance::OodNoise),
        }
    }
}

pub fn format_samples(samples: &[LabeledSample]) -> String {
    let mut out = String::new();
    for s in samples {
        for v in &s.features {
            write!(out, "{v},").expect("write to string");
        }
        let truth = s.true_label.map_or(-1, |t| t as i64);
        writeln!(out, "{},{},{}", s.given_label, truth, s.provenance.as_str()).expect("write to string");
    }
    out
}

pub fn write_samples(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    fs::write(path, format_samples(samples))?;
    Ok(())
}

pub fn parse_samples(text: &str, dim: usize) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 3 {
            return Err(err(format!("expected {} fields, found {}", dim + 3, fields.len())));
        }
        let features = fields[..dim]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("feature {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let given_label = fields[dim]
            .parse::<usize>()
            .map_err(|e| err(format!("given label: {e}")))?;
        let truth = fields[dim + 1]
            .parse::<i64>()
            .map_err(|e| err(format!("true label: {e}")))?;
        let true_label = if truth < 0 { None } else { Some(truth as usize) };
        let provenance = fields[dim + 2].parse::<Provenance>().map_err(err)?;
        out.push(LabeledSample {
            features,
            given_label,
            true_label,
            provenance,
        });
    }
    Ok(out)
}

pub fn read_samples(path: &Path, dim: usize) -> Result<Vec<LabeledSample>> {
    parse_samples(&fs::read_to_string(path)?, dim)
}

/// Writes `train.csv`, `test.csv` and `dataset.json` into `dir`.
pub fn save_dir(dir: &Path, train: &Dataset, test: &Dataset, meta: &DatasetMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_samples(&dir.join(TRAIN_FILE), &train.samples)?;
    write_samples(&dir.join(TEST_FILE), &test.samples)?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

pub fn load_dir(dir: &Path) -> Result<(Dataset, Dataset, DatasetMeta)> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
    let wrap = |samples| Dataset {
        classes: meta.classes,
        dim: meta.dim,
        class_means: meta.class_means.clone(),
        sigma: meta.sigma,
        samples,
    };
    let train = wrap(read_samples(&dir.join(TRAIN_FILE), meta.dim)?);
    let test = wrap(read_samples(&dir.join(TEST_FILE), meta.dim)?);
    train.validate()?;
    test.validate()?;
    Ok((train, test, meta))
}
