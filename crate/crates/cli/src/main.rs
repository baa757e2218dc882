//! `mbes`: generate, train, detect, denoise, baseline, eval and sweep.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbes_core::baselines::Interpolation;
use mbes_core::Variant;

use config::{MethodName, Split};

#[derive(Debug, Parser)]
#[command(name = "mbes", version, about = "Score-based outlier detection and denoising for multibeam soundings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML or JSON run configuration (flags override its values).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config file, then MBES_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bit-reproducible reductions.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a survey and write it as MBP1.
    Generate(GenerateArgs),
    /// Fit a score model on a labelled survey.
    Train(TrainArgs),
    /// Flag outliers with a trained model.
    Detect(InferArgs),
    /// Detect and denoise with a trained model.
    Denoise(InferArgs),
    /// Classical outlier removal plus interpolation.
    Baseline(BaselineArgs),
    /// Compare a prediction with ground truth.
    Eval(EvalArgs),
    /// Rank a grid of baseline settings by F1.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Built-in preset supplying terrain, sensor and noise settings.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled MBP1 survey.
    #[arg(long)]
    pub data: PathBuf,
    /// Preset supplying the architecture and schedule defaults.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// MBP1 survey.
    #[arg(long)]
    pub data: PathBuf,
    /// score, score_mean or score_mean_score (denoise only).
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub ensemble_k: Option<usize>,
    #[arg(long)]
    pub iqr_mult: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// MBP1 output with the predicted mask (and denoised points).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    #[arg(long)]
    pub interp: Option<Interpolation>,
    #[arg(long)]
    pub nb_neighbors: Option<usize>,
    #[arg(long)]
    pub std_ratio: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub min_neighbors: Option<usize>,
    /// Nearest inliers per kriging query; 0 uses all.
    #[arg(long)]
    pub kriging_neighbors: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction MBP1 (denoised points and/or predicted mask).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth MBP1 with clean points and labels.
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON report; a per-patch CSV is written beside it.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Labelled MBP1 survey.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON table; a CSV copy is written beside it.
    #[arg(long)]
    pub report: PathBuf,
}

/// Exit 1 for bad invocations or configuration, 2 for failures while running.
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<mbes_core::Error> for Failure {
    fn from(e: mbes_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
