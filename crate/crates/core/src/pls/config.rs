use serde::{Deserialize, Serialize};

use crate::data::AugmentParams;
use crate::error::{Error, Result};
use crate::gmm::GmmOptions;

/// How detected-noisy samples are weighted once their labels are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Posterior of the low mode of a mixture fitted to the pseudo-losses.
    Gmm,
    /// Hard weight: 1 when the averaged prediction's top probability
    /// exceeds `threshold`, else 0.
    Confidence { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Stage-one threshold `t` on the clean-mode posterior. Drop it to 0.5
    /// for very high noise ratios.
    pub gmm_threshold: f64,
    /// Exponent `gamma` applied to the averaged two-view prediction.
    pub pseudo_exponent: f64,
    /// Divisor `mu` of the embedding dot products.
    pub contrastive_temperature: f64,
    pub enable_correction: bool,
    pub enable_contrastive: bool,
    pub enable_w: bool,
    /// When false, `w` only weights the classification loss and the
    /// contrastive labels treat every pseudo-label as trusted.
    pub w_in_contrastive: bool,
    pub selection: Selection,
    pub class_reg_weight: f64,
    pub hidden: usize,
    pub proj_dim: usize,
    pub augment: AugmentParams,
    pub gmm: GmmOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            warmup_epochs: 10,
            batch_size: 64,
            lr0: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            gmm_threshold: 0.95,
            pseudo_exponent: 2.0,
            contrastive_temperature: 0.2,
            enable_correction: true,
            enable_contrastive: true,
            enable_w: true,
            w_in_contrastive: true,
            selection: Selection::Gmm,
            class_reg_weight: 0.0,
            hidden: 64,
            proj_dim: 16,
            augment: AugmentParams::default(),
            gmm: GmmOptions::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Mixup cross-entropy on the given labels for every epoch.
    pub fn baseline() -> Self {
        Self {
            enable_correction: false,
            enable_contrastive: false,
            enable_w: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if self.warmup_epochs > self.epochs {
            problems.push(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size < 2 {
            problems.push("batch_size must be >= 2".to_string());
        }
        if !(self.gmm_threshold > 0.0 && self.gmm_threshold <= 1.0) {
            problems.push(format!("gmm_threshold {} outside (0, 1]", self.gmm_threshold));
        }
        if !(self.pseudo_exponent > 0.0) {
            problems.push("pseudo_exponent must be > 0".to_string());
        }
        if !(self.contrastive_temperature > 0.0) {
            problems.push("contrastive_temperature must be > 0".to_string());
        }
        if !(self.lr0 > 0.0) || self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            problems.push("need lr0 > 0, weight_decay >= 0, momentum in [0, 1)".to_string());
        }
        if self.hidden == 0 || self.proj_dim == 0 {
            problems.push("hidden and proj_dim must be >= 1".to_string());
        }
        if let Selection::Confidence { threshold } = self.selection {
            if !(0.0..=1.0).contains(&threshold) {
                problems.push(format!("confidence threshold {threshold} outside [0, 1]"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Parses a JSON document with `TrainConfig` field names; missing fields
    /// take their defaults. All unknown keys are reported together.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let known = serde_json::to_value(Self::default())?;
        let known = known.as_object().expect("struct serializes to object");
        let unknown: Vec<&str> = obj
            .keys()
            .filter(|k| !known.contains_key(k.as_str()))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let config: Self = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("bad config value: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_and_unknown_keys() {
        let cfg = TrainConfig::from_json(r#"{"epochs": 12, "warmup_epochs": 3}"#).unwrap();
        assert_eq!(cfg.epochs, 12);
        assert_eq!(cfg.gmm_threshold, 0.95);
        let err = TrainConfig::from_json(r#"{"epoch": 12, "lr": 0.1}"#).unwrap_err().to_string();
        assert!(err.contains("epoch") && err.contains("lr"), "{err}");
        assert!(TrainConfig::from_json(r#"{"gmm_threshold": 0.0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"epochs": "ten"}"#).is_err());
    }

    #[test]
    fn selection_round_trip() {
        let cfg = TrainConfig {
            selection: Selection::Confidence { threshold: 0.9 },
            ..TrainConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
    }
}
