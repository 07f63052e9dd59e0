use std::path::PathBuf;
use std::process::ExitCode;

use callab::harness::{compare_dirs, emit_plot_data, run, ExperimentConfig, PlotKind, RunStatus, WORKERS_ENV};
use clap::{Parser, Subcommand};

/// Calibration experiments for ensembles and soft-label augmentation.
#[derive(Parser)]
#[command(version, after_help = format!("Worker threads for `run` come from {WORKERS_ENV} (default: all cores)."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every grid cell of a config for every seed.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set train.epochs=50`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Summarize run directories against a baseline cell or strategy.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        baseline: String,
    },
    /// Write plot-ready CSV for a run directory.
    PlotData {
        dir: PathBuf,
        /// reliability, shift_curve or policy_counts.
        #[arg(long)]
        kind: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Command) -> callab::Result<()> {
    match cmd {
        Command::Run { config, mut overrides, output_dir, seeds } => {
            if let Some(d) = output_dir {
                overrides.push(format!("output_dir={:?}", d.display().to_string()));
            }
            if let Some(s) = seeds {
                overrides.push(format!("seeds={s:?}"));
            }
            let config = ExperimentConfig::load(&config, &overrides)?;
            let records = run(&config)?;
            let bad = records.iter().filter(|r| r.status != RunStatus::Ok).count();
            println!(
                "{} records written to {} ({} not ok)",
                records.len(),
                config.output_dir.display(),
                bad
            );
            Ok(())
        }
        Command::Compare { dirs, baseline } => {
            let (summary, txt, csv) = compare_dirs(&dirs, &baseline)?;
            print!("{}", summary.to_text());
            println!("wrote {} and {}", txt.display(), csv.display());
            Ok(())
        }
        Command::PlotData { dir, kind } => {
            let path = emit_plot_data(&dir, kind.parse::<PlotKind>()?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
