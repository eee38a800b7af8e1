use super::TrainConfig;
use crate::error::{Error, Result};

/// Constant `lr0` through warmup, then cosine decay
/// `lr0 * (1 + cos(pi * (e - e_w) / (e_max - e_w))) / 2`.
pub fn cosine_lr(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Contract(format!(
            "epoch {epoch} outside [0, {})",
            config.epochs
        )));
    }
    if epoch < config.warmup_epochs {
        return Ok(config.lr0);
    }
    let progress = (epoch - config.warmup_epochs) as f64 / (config.epochs - config.warmup_epochs) as f64;
    Ok(config.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
