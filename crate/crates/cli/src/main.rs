//! `startcast`: the prediction pipeline as batch subcommands.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::one_line;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "startcast", version, about = "Startup success prediction over time windows")]
pub struct Cli {
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults for seed, threads, model, strategy, params.
    #[arg(long, global = true, value_name = "FILE")]
    pub run_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic export with known success probabilities.
    Synth(SynthArgs),
    /// Load and filter an export; report counts and round intervals.
    Ingest(IngestArgs),
    /// Label every eligible company in every window.
    Windows(WindowsArgs),
    /// Compute the factor matrix for a sample list.
    Features(FeaturesArgs),
    /// Train one model on a feature file.
    Train(TrainArgs),
    /// Score models on a feature file.
    Eval(EvalArgs),
    /// Compare single- and multiple-window training window by window.
    WindowsStudy(StudyArgs),
    /// Attribute one company's score to its factors.
    Explain(ExplainArgs),
    /// Rank the eligible pool at a date and build a top-k portfolio.
    Portfolio(PortfolioArgs),
    /// Random hyperparameter search.
    Tune(TuneArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Generator settings (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Load and filter report (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// Round-interval table; defaults to interval_stats.csv beside the report.
    #[arg(long)]
    pub intervals: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct WindowsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sample list (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Label-distribution table; defaults to label_distribution.csv beside the samples.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Train share of the random split reported in the table.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write train.csv and test.csv into this directory.
    #[arg(long)]
    pub split_out: Option<PathBuf>,
    /// Split by window: windows from this index on form the test set.
    /// Without it the split is random with --ratio.
    #[arg(long)]
    pub test_from: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// logreg, knn, cart, forest, gbdt-xgb, gbdt-lgbm, softtree or mlp.
    #[arg(long)]
    pub model: Option<String>,
    /// none, smote or weight.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Hyperparameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Feature file to train on.
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model file (JSON); a training log is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model file, repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    InSample,
    OutOfSample,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Per-window F1 table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub company: String,
    /// Prediction date, YYYY-MM-DD.
    #[arg(long)]
    pub asof: String,
    /// Directory for the attribution CSV, text and JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PortfolioArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Prediction date, YYYY-MM-DD; outcomes are read over the 18 months after it.
    #[arg(long)]
    pub asof: String,
    #[arg(long)]
    pub k: usize,
    /// before-series-a, series-a or series-b.
    #[arg(long)]
    pub stage: Option<String>,
    /// Portfolio sizes for the success curve, comma separated; defaults to 10..=k by 10.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub budget: usize,
    /// Share of the training file held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub valid: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(&CliError::usage(first));
        }
    };
    std::panic::set_hook(Box::new(|_| {}));
    let outcome = std::panic::catch_unwind(|| commands::run(&cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => fail(&e),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(&CliError::Internal(msg))
        }
    }
}
