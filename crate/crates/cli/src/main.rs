//! `pls`: generate noisy blob datasets, train, run the ablation grid and emit
//! curve data.

mod ablate;
mod error;
mod generate;
mod report;
mod train;

use clap::{Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pls", version, about = "Pseudo-loss selection for label-noise robust training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a noisy blob dataset (train/test files plus a JSON sidecar)
    Generate(generate::GenerateArgs),
    /// Train on a generated dataset
    Train(train::TrainArgs),
    /// Run the six-row ablation grid over a list of seeds
    Ablate(ablate::AblateArgs),
    /// Emit AUC curves and pseudo-loss histograms for a finished run
    Report(report::ReportArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => {
            let meta = generate::run(&args)?;
            println!(
                "wrote {} train ({} id-noisy, {} ood-noisy) and {} test samples to {}",
                meta.train_size,
                meta.id_noisy,
                meta.ood_noisy,
                meta.test_size,
                args.out.display()
            );
        }
        Command::Train(args) => {
            let s = train::run(&args)?;
            println!(
                "best_test_acc={:.4} final_test_acc={:.4} out={}",
                s.best_test_acc,
                s.final_test_acc,
                args.out.display()
            );
        }
        Command::Ablate(args) => {
            for c in ablate::run(&args)? {
                println!("{:<28} {:.4} ± {:.4}", c.row.name, c.mean(), c.std());
            }
        }
        Command::Report(args) => {
            let out = report::run(&args)?;
            println!("wrote curves to {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let msg = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            fail(&CliError::Usage(msg.trim_start_matches("error: ").to_string()));
        }
    };
    if let Err(e) = dispatch(cli) {
        fail(&e);
    }
}

fn fail(e: &CliError) -> ! {
    eprintln!("{}", e.line());
    std::process::exit(e.exit_code());
}
