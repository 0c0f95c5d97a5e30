//! Command-line entry point: dataset generation, training sweeps,
//! verification suites, and convergence-curve comparisons.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant
//! violation (either detected by a verify suite or raised as a numeric
//! contract failure). Set FAIRNORM_THREADS to bound the worker pool.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use fairnorm_core::{Error, ErrorCategory};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fairnorm",
    version,
    about = "Group-aware graph normalization: datasets, training, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset directory.
    Gen(GenArgs),
    /// Train the graph classifier over one or more seeds.
    Train(TrainArgs),
    /// Run the spectral, projection, bound, and convergence suites.
    Verify(VerifyArgs),
    /// Emit training-loss curves across normalization modes.
    Curves(CurvesArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base preset: bench800 (social-network ratios) or tiny.
    #[arg(long, default_value = "bench800")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the preset's group-0 size.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Override the preset's group-1 size.
    #[arg(long)]
    pub n1: Option<usize>,
    /// Override the preset's feature count.
    #[arg(long)]
    pub features: Option<usize>,
    /// Override the expected within-group edge count.
    #[arg(long)]
    pub intra: Option<usize>,
    /// Override the expected cross-group edge count.
    #[arg(long)]
    pub inter: Option<usize>,
    /// Override the group feature-mean offset.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Override the label bias (expected positive-rate gap).
    #[arg(long)]
    pub bias: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen` (or any directory with a
    /// compatible meta.json).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for curves, per-seed results, and the aggregate.
    #[arg(long)]
    pub out: PathBuf,
    /// Model-init seeds, one training run each.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long = "weight-decay", default_value_t = 5e-3)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// relu, sigmoid, or identity.
    #[arg(long, default_value = "relu")]
    pub activation: String,
    /// none, single (one group over all nodes), or group (per sensitive
    /// group).
    #[arg(long, default_value = "group")]
    pub norm: String,
    /// none, fairnorm (mean-gap + deviation penalties), or covariance.
    #[arg(long, default_value = "none")]
    pub fairness: String,
    /// Weight of the mean-gap penalty (fairnorm) or the covariance penalty.
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    /// Weight of the peak-deviation penalty (fairnorm only).
    #[arg(long, default_value_t = 1e-5)]
    pub tau: f64,
    /// Train,val,test fractions.
    #[arg(long, default_value = "0.5,0.25,0.25")]
    pub split: String,
    /// Seed of the stratified split shuffle.
    #[arg(long = "split-seed", default_value_t = 1)]
    pub split_seed: u64,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Output directory for per-trial CSVs and the summary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// interlacing, projection, bound, convergence, or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Override every selected suite's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long = "weight-decay", default_value_t = 5e-3)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value = "relu")]
    pub activation: String,
    /// Fairnorm penalty weights used by the fairnorm series.
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tau: f64,
    #[arg(long, default_value = "0.5,0.25,0.25")]
    pub split: String,
    #[arg(long = "split-seed", default_value_t = 1)]
    pub split_seed: u64,
    /// Threshold factor for the epochs-to-plateau comparison.
    #[arg(long, default_value_t = 1.05)]
    pub factor: f64,
}

fn init_threads() -> Result<usize, Error> {
    if let Ok(raw) = std::env::var("FAIRNORM_THREADS") {
        let n: usize = raw.parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "FAIRNORM_THREADS must be a positive integer, got '{raw}'"
            ))
        })?;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "FAIRNORM_THREADS must be a positive integer".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(rayon::current_num_threads())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let threads = match init_threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::run_gen(&args, threads),
        Command::Train(args) => commands::run_train(&args, threads),
        Command::Verify(args) => commands::run_verify(&args, threads),
        Command::Curves(args) => commands::run_curves(&args, threads),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Data => 2,
                ErrorCategory::Invariant => 3,
            };
            std::process::exit(code);
        }
    }
}
