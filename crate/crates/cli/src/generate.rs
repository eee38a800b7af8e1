use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pls_core::data::{self, BlobSpec, DatasetMeta, IdNoiseMode, NoiseConfig, NoisePreset};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Imagenet,
    Web,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Training samples per class.
    #[arg(long, default_value_t = 1000)]
    pub n_per_class: usize,
    /// Test samples per class (defaults to `n_per_class`).
    #[arg(long)]
    pub n_test_per_class: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.0)]
    pub r_in: f64,
    #[arg(long, default_value_t = 0.0)]
    pub r_out: f64,
    #[arg(long, value_enum, default_value = "symmetric")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "imagenet")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenerateArgs) -> CliResult<DatasetMeta> {
    let mut spec = BlobSpec::new(args.classes, args.dim, args.n_per_class, args.separation);
    if let Some(n) = args.n_test_per_class {
        spec.n_test_per_class = n;
    }
    let preset = match args.preset {
        Preset::Imagenet => NoisePreset::Imagenet,
        Preset::Web => NoisePreset::Web,
    };
    let mode = match args.mode {
        Mode::Symmetric => IdNoiseMode::Symmetric,
        Mode::Asymmetric => IdNoiseMode::Asymmetric,
    };
    let mut noise = NoiseConfig::new(args.r_in, args.r_out, mode, args.seed);
    noise.ood = preset.ood_params();
    noise.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (train, test) = data::make_blobs(&spec, args.seed)?;
    let train = data::corrupt(&train, &noise)?;
    let mut meta = DatasetMeta::describe(&train, &test);
    meta.blobs = Some(spec);
    meta.noise = Some(noise);
    meta.preset = Some(preset);
    meta.blob_seed = Some(args.seed);
    data::save_dir(&args.out, &train, &test, &meta)?;
    Ok(meta)
}
