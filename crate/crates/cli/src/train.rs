use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use pls_core::data::{self, Dataset, NoisePreset};
use pls_core::model::save_checkpoint;
use pls_core::pls::{run_training, EpochMetrics, TrainConfig};
use serde::Serialize;

use crate::error::{self, CliError, CliResult};
use crate::report;

pub const SUMMARY_FILE: &str = "summary.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SNAPSHOT_FILE: &str = "pseudo_loss.csv";
pub const HISTOGRAM_FILE: &str = "pseudo_loss_hist.csv";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with `TrainConfig` fields; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub gmm_threshold: Option<f64>,
    #[arg(long)]
    pub pseudo_exponent: Option<f64>,
    #[arg(long)]
    pub contrastive_temperature: Option<f64>,
    #[arg(long)]
    pub class_reg_weight: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config: TrainConfig,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
    pub gmm_fits: usize,
    pub wall_clock_seconds: f64,
    pub epochs: Vec<EpochMetrics>,
}

/// Reads a config file, or the defaults, and reports whether the file set
/// `class_reg_weight` itself.
pub fn load_config(path: Option<&Path>) -> CliResult<(TrainConfig, bool)> {
    let Some(path) = path else {
        return Ok((TrainConfig::default(), false));
    };
    let text = error::read(path)?;
    let config = TrainConfig::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let explicit = serde_json::from_str::<serde_json::Value>(&text)?
        .get("class_reg_weight")
        .is_some();
    Ok((config, explicit))
}

/// The web preset trains with the class-balance term unless the config says
/// otherwise.
pub fn apply_preset(config: &mut TrainConfig, preset: Option<NoisePreset>, explicit_reg: bool) {
    if preset == Some(NoisePreset::Web) && !explicit_reg {
        config.class_reg_weight = 1.0;
    }
}

pub fn run(args: &TrainArgs) -> CliResult<RunSummary> {
    let (mut config, explicit_reg) = load_config(args.config.as_deref())?;
    let (train, test, meta) = data::load_dir(&args.data)?;
    apply_preset(&mut config, meta.preset, explicit_reg || args.class_reg_weight.is_some());
    config.seed = args.seed;
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                config.$field = v;
            }
        )*};
    }
    set!(
        epochs,
        warmup_epochs,
        batch_size,
        lr0,
        gmm_threshold,
        pseudo_exponent,
        contrastive_temperature,
        class_reg_weight
    );
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    train_to_dir(&config, &train, &test, &args.out)
}

/// Trains once and writes every run artifact into `out`.
pub fn train_to_dir(config: &TrainConfig, train: &Dataset, test: &Dataset, out: &Path) -> CliResult<RunSummary> {
    let start = Instant::now();
    let report = run_training::<f64>(config, train, test)?;
    let wall_clock_seconds = start.elapsed().as_secs_f64();

    error::create_dir(out)?;
    error::write(&out.join(EPOCHS_FILE), report.csv())?;
    save_checkpoint(&report.network, &out.join(CHECKPOINT_FILE))?;
    error::write(&out.join(SNAPSHOT_FILE), report::snapshots_csv(&report.snapshots))?;
    let hist = report::histogram_csv(&report.snapshots, report::DEFAULT_BINS);
    error::write(&out.join(HISTOGRAM_FILE), hist)?;

    let summary = RunSummary {
        seed: config.seed,
        config: config.clone(),
        best_test_acc: report.best_test_acc,
        final_test_acc: report.final_test_acc,
        gmm_fits: report.gmm_fits,
        wall_clock_seconds,
        epochs: report.epochs,
    };
    error::write(&out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
