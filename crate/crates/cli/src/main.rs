//! `jssr`: dataset generation, training, calibration, baselines and sweeps.
//!
//! Exit status is 0 on success, 1 when a result audit fails and 2 on any
//! other error. `JSSR_THREADS` caps the worker pool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jssr_core::bench::Scheme;

#[derive(Debug, Parser)]
#[command(name = "jssr", version, about = "Jointly sparse support recovery with learned pilots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded dataset file for the base point of a config.
    Generate(GenerateArgs),
    /// Train the auto-encoder and write a checkpoint plus a training log CSV.
    Train(TrainArgs),
    /// Pick the decision threshold on a dataset and store it in the checkpoint.
    Calibrate(CalibrateArgs),
    /// Evaluate one detector on a test set and emit a result row.
    Baseline(BaselineArgs),
    /// Run a sweep and write the result CSV with its decision sidecar.
    Bench(BenchArgs),
    /// Recompute every error rate of a result CSV from its decision sidecar.
    Audit(AuditArgs),
    /// Print a built-in sweep spec as TOML.
    Preset {
        #[arg(value_enum)]
        preset: Preset,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    PaperFull,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Sweep spec TOML; keys it sets override the desk preset.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to the checkpoint path with `.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training set; generated from the config when absent.
    #[arg(long, requires = "val")]
    train: Option<PathBuf>,
    /// Validation set for early stopping.
    #[arg(long, requires = "train")]
    val: Option<PathBuf>,
    /// Train the raw-feature decoder instead of the covariance-feature one.
    #[arg(long)]
    naive: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Validation dataset.
    #[arg(long)]
    data: PathBuf,
    /// Write the calibrated checkpoint here instead of in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// lasso, glasso, amp, ml, naive, proposed or oracle.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Scheme,
    /// Test dataset.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset for lambda and threshold selection; drawn from the
    /// test set's distribution when absent.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Trained checkpoint for the learned schemes.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sweep spec TOML for L/N, solver settings and timing.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result CSV (plus decision sidecar); rows go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Sweep spec TOML laid over the chosen preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Start from the desk preset (the default).
    #[arg(long, conflicts_with = "paper_full")]
    desk: bool,
    /// Start from the full-scale preset.
    #[arg(long)]
    paper_full: bool,
    /// Save every trained checkpoint and training log here.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    results: PathBuf,
    /// Decision sidecar; defaults to the one next to the CSV.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: jssr_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = jssr_core::bench::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a).map(|()| true),
        Command::Train(a) => commands::train(&a).map(|()| true),
        Command::Calibrate(a) => commands::calibrate(&a).map(|()| true),
        Command::Baseline(a) => commands::baseline(&a).map(|()| true),
        Command::Bench(a) => commands::bench(&a),
        Command::Audit(a) => commands::audit(&a),
        Command::Preset { preset } => commands::preset(preset).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
