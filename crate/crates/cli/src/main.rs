use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cssl_core::continual::{LambdaSchedule, Mode};
use cssl_core::eval::{AccuracyMatrix, Metrics};
use cssl_core::runner::{
    emit_plots, parse_baseline_csv, run_experiment_with, sweep, ExperimentConfig, Overrides,
};
use cssl_core::ssl::SslMethod;
use cssl_core::{Error, Result};

/// Continual self-supervised activity recognition experiments.
#[derive(Debug, Parser)]
#[command(name = "cssl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// kaizen, cassle or no-distill.
    #[arg(long)]
    mode: Option<Mode>,
    /// byol or mocov2p.
    #[arg(long)]
    ssl: Option<SslMethod>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root [default: $CSSL_OUT, then ./out].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self, lambda: Option<LambdaSchedule>) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            mode: self.mode,
            ssl_method: self.ssl,
            lambda,
            seed: self.seed,
            output_dir: self.out.clone(),
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one continual run and write its outputs.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Importance schedule `a+b`.
        #[arg(long)]
        lambda: Option<LambdaSchedule>,
    },
    /// One run per importance schedule, plus a comparison table.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated schedules, e.g. "0.5+0.0,0.5+0.5".
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<LambdaSchedule>,
    },
    /// Recompute FA, CA, forgetting and forward transfer from a matrix.
    Metrics {
        #[arg(long)]
        matrix: PathBuf,
        /// Per-task random-baseline accuracies, needed for forward transfer.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Redraw the charts of a finished run.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { args, lambda } => {
            let cfg = args.load(lambda)?;
            let out = run_experiment_with(&cfg, |t, row| {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                eprintln!("task {t}: {}", cells.join(" "));
            })?;
            println!("{}", out.dir.display());
            println!("{}", serde_json::to_string(&out.metrics)?);
        }
        Command::Sweep { args, lambdas } => {
            let cfg = args.load(None)?;
            let out = sweep(&cfg, &lambdas)?;
            println!("{}", out.dir.join("comparison.csv").display());
            for r in &out.rows {
                println!("{} {}", r.schedule, serde_json::to_string(&r.metrics)?);
            }
        }
        Command::Metrics { matrix, baseline } => {
            let a = AccuracyMatrix::read_csv(&matrix)?;
            let b = baseline
                .map(|p| std::fs::read_to_string(p).map_err(Error::from).and_then(|t| parse_baseline_csv(&t)))
                .transpose()?;
            println!("{}", serde_json::to_string(&Metrics::compute(&a, b.as_deref())?)?);
        }
        Command::Plot { run } => {
            for p in emit_plots(&run)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
