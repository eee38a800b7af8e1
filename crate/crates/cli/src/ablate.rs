use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use pls_core::data;
use pls_core::pls::TrainConfig;

use crate::error::{CliError, CliResult};
use crate::train::{apply_preset, load_config, train_to_dir};

pub const TABLE_FILE: &str = "ablation.csv";

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seeds; each configuration runs once per seed.
    #[arg(long = "seed", alias = "seeds", value_delimiter = ',', num_args = 1.., required = true)]
    pub seeds: Vec<u64>,
    /// Base config; the ablation switches are overwritten per row.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// One row of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub name: &'static str,
    pub correct: bool,
    pub cont: bool,
    pub w: bool,
    pub w_in_contrastive: bool,
}

pub const ROWS: [Row; 6] = [
    Row { name: "baseline", correct: false, cont: false, w: false, w_in_contrastive: false },
    Row { name: "correct", correct: true, cont: false, w: false, w_in_contrastive: false },
    Row { name: "correct_w", correct: true, cont: false, w: true, w_in_contrastive: false },
    Row { name: "correct_cont", correct: true, cont: true, w: false, w_in_contrastive: false },
    Row { name: "correct_cont_w", correct: true, cont: true, w: true, w_in_contrastive: true },
    Row { name: "correct_cont_w_classif_only", correct: true, cont: true, w: true, w_in_contrastive: false },
];

impl Row {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            enable_correction: self.correct,
            enable_contrastive: self.cont,
            enable_w: self.w,
            w_in_contrastive: self.w_in_contrastive,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub row: Row,
    pub best_acc: Vec<f64>,
}

impl CellStats {
    pub fn mean(&self) -> f64 {
        self.best_acc.iter().sum::<f64>() / self.best_acc.len() as f64
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.best_acc.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.best_acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

pub fn table_csv(cells: &[CellStats], seeds: &[u64]) -> String {
    let mut out = String::from("row,correct,cont,w,w_in_contrastive,mean_best_acc,std_best_acc");
    for s in seeds {
        write!(out, ",seed_{s}").expect("write to string");
    }
    out.push('\n');
    for c in cells {
        let r = c.row;
        write!(
            out,
            "{},{},{},{},{},{},{}",
            r.name,
            r.correct,
            r.cont,
            r.w,
            r.w_in_contrastive,
            c.mean(),
            c.std()
        )
        .expect("write to string");
        for a in &c.best_acc {
            write!(out, ",{a}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &AblateArgs) -> CliResult<Vec<CellStats>> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("ablate needs at least one seed".into()));
    }
    let (mut base, explicit_reg) = load_config(args.config.as_deref())?;
    let (train, test, meta) = data::load_dir(&args.data)?;
    apply_preset(&mut base, meta.preset, explicit_reg);

    let jobs: Vec<(usize, usize)> = (0..ROWS.len())
        .flat_map(|r| (0..args.seeds.len()).map(move |s| (r, s)))
        .collect();
    let results = Mutex::new(vec![vec![f64::NAN; args.seeds.len()]; ROWS.len()]);
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let workers = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(r, s)) = jobs.get(k) else { break };
                let seed = args.seeds[s];
                let config = TrainConfig {
                    seed,
                    ..ROWS[r].apply(&base)
                };
                let dir = args.out.join(ROWS[r].name).join(format!("seed_{seed}"));
                match train_to_dir(&config, &train, &test, &dir) {
                    Ok(summary) => results.lock().expect("no poisoning")[r][s] = summary.best_test_acc,
                    Err(e) => {
                        first_error.lock().expect("no poisoning").get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("no poisoning") {
        return Err(e);
    }
    let cells: Vec<CellStats> = results
        .into_inner()
        .expect("no poisoning")
        .into_iter()
        .zip(ROWS)
        .map(|(best_acc, row)| CellStats { row, best_acc })
        .collect();
    crate::error::write(&args.out.join(TABLE_FILE), table_csv(&cells, &args.seeds))?;
    Ok(cells)
}
