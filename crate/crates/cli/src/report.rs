use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use pls_core::pls::{EpochMetrics, PseudoLossSnapshot};

use crate::error::{self, CliError, CliResult};
use crate::train::{EPOCHS_FILE, SNAPSHOT_FILE};

pub const DEFAULT_BINS: usize = 20;
pub const CURVE_FILE: &str = "auc_curve.csv";
pub const REPORT_HISTOGRAM_FILE: &str = "pseudo_loss_hist.csv";

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub run: PathBuf,
    /// Where to write curve files (defaults to the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

pub fn snapshots_csv(snapshots: &[PseudoLossSnapshot]) -> String {
    let mut out = String::from("epoch,pseudo_loss,outcome\n");
    for s in snapshots {
        for (loss, correct) in s.pseudo_loss.iter().zip(&s.correct) {
            let outcome = match correct {
                Some(true) => "correct",
                Some(false) => "incorrect",
                None => "ood",
            };
            writeln!(out, "{},{loss},{outcome}", s.epoch).expect("write to string");
        }
    }
    out
}

fn parse_snapshots(text: &str) -> CliResult<Vec<PseudoLossSnapshot>> {
    let mut snaps: Vec<PseudoLossSnapshot> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || CliError::Usage(format!("{SNAPSHOT_FILE} line {}: malformed row", n + 1));
        let mut parts = line.split(',');
        let (Some(e), Some(l), Some(o), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let epoch: usize = e.parse().map_err(|_| bad())?;
        let loss: f64 = l.parse().map_err(|_| bad())?;
        let correct = match o {
            "correct" => Some(true),
            "incorrect" => Some(false),
            "ood" => None,
            _ => return Err(bad()),
        };
        if snaps.last().map(|s| s.epoch) != Some(epoch) {
            snaps.push(PseudoLossSnapshot {
                epoch,
                pseudo_loss: Vec::new(),
                correct: Vec::new(),
            });
        }
        let snap = snaps.last_mut().expect("pushed above");
        snap.pseudo_loss.push(loss);
        snap.correct.push(correct);
    }
    Ok(snaps)
}

/// Per-snapshot histogram of detected-noisy pseudo-losses, split by whether
/// the pseudo-label is right, wrong, or belongs to an OOD sample. Bins span
/// the range of all snapshots so histograms are comparable across epochs.
pub fn histogram_csv(snapshots: &[PseudoLossSnapshot], bins: usize) -> String {
    let mut out = String::from("epoch,bin_low,bin_high,correct,incorrect,ood\n");
    let all = snapshots.iter().flat_map(|s| s.pseudo_loss.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if bins == 0 || !lo.is_finite() {
        return out;
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    for s in snapshots {
        let mut counts = vec![[0usize; 3]; bins];
        for (&loss, correct) in s.pseudo_loss.iter().zip(&s.correct) {
            let b = (((loss - lo) / width) as usize).min(bins - 1);
            let k = match correct {
                Some(true) => 0,
                Some(false) => 1,
                None => 2,
            };
            counts[b][k] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let low = lo + b as f64 * width;
            writeln!(out, "{},{low},{},{},{},{}", s.epoch, low + width, c[0], c[1], c[2]).expect("write to string");
        }
    }
    out
}

fn parse_epochs(text: &str) -> CliResult<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(EpochMetrics::CSV_HEADER) {
        return Err(CliError::Usage(format!("{EPOCHS_FILE}: unexpected header")));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || CliError::Usage(format!("{EPOCHS_FILE} line {}: malformed row", n + 2));
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            if v.len() != 10 {
                return Err(bad());
            }
            Ok(EpochMetrics {
                epoch: v[0] as usize,
                lr: v[1],
                l_classif: v[2],
                l_cont: v[3],
                train_acc: v[4],
                test_acc: v[5],
                noise_auc: v[6],
                pseudo_auc: v[7],
                frac_detected_noisy: v[8],
                mean_w: v[9],
                mean_w_ood: f64::NAN,
                mean_w_id_correct: f64::NAN,
            })
        })
        .collect()
}

pub fn curve_csv(epochs: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,noise_auc,pseudo_auc,test_acc\n");
    for m in epochs {
        writeln!(out, "{},{},{},{}", m.epoch, m.noise_auc, m.pseudo_auc, m.test_acc).expect("write to string");
    }
    out
}

pub fn run(args: &ReportArgs) -> CliResult<PathBuf> {
    let epochs = parse_epochs(&error::read(&args.run.join(EPOCHS_FILE))?)?;
    let snapshots = parse_snapshots(&error::read(&args.run.join(SNAPSHOT_FILE))?)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    error::create_dir(&out)?;
    error::write(&out.join(CURVE_FILE), curve_csv(&epochs))?;
    error::write(&out.join(REPORT_HISTOGRAM_FILE), histogram_csv(&snapshots, args.bins))?;
    Ok(out)
}
