mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult, EXIT_CONFIG};

/// Deep stochastic volatility modeling: simulate, train, forecast, evaluate, report.
#[derive(Parser, Debug)]
#[command(name = "volcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a synthetic stochastic-volatility corpus.
    Simulate,
    /// Train a DSVM on windowed return sequences.
    Train,
    /// Rolling one-step-ahead forecasts for the DSVM and/or GARCH baselines.
    Forecast,
    /// Per-series mean NLL table and Friedman test from forecast CSVs.
    Evaluate,
    /// Per-series volatility CSVs and SVG plots.
    Report,
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input corpus (or forecast directory for `evaluate`).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated: dsvm, garch, gjr, tgarch, egarch.
    #[arg(long, global = true, value_delimiter = ',')]
    model: Option<Vec<String>>,
    /// DSVM checkpoint for `forecast`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Forecast directory for `report`.
    #[arg(long, global = true)]
    forecasts: Option<PathBuf>,
    /// Sequence length T.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Monte Carlo samples per forecast.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
}

fn run(cli: Cli) -> CliResult<()> {
    let f = cli.flags;
    let overrides = Overrides {
        seed: f.seed,
        data: f.data,
        out: f.out,
        checkpoint: f.checkpoint,
        forecasts: f.forecasts,
        models: f.model,
        window: f.window,
        samples: f.samples,
        threads: f.threads,
        stride: f.stride,
        epochs: f.epochs,
        batch: f.batch,
    };
    let cfg = RunConfig::load(f.config.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Forecast => commands::forecast(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
