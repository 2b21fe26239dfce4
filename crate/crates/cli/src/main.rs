//! `finnews`: corpus statistics, preprocessing, training, evaluation,
//! prediction and gradient checks for the financial news classifiers.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or input error,
//! 3 numeric divergence during training.

mod commands;
mod config;
mod data;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finnews::pipeline::PipelineError;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "finnews", version, about = "Financial news classification toolkit")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`; also seeds the split and gradient checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for preprocessing, batches and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Report malformed articles and carry on instead of failing.
    #[arg(long, global = true)]
    continue_on_error: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus statistics per split.
    Stats(commands::stats::Args),
    /// Write split files, the vocabulary and per-token feature records.
    Preprocess(commands::preprocess::Args),
    /// Train the configured model and write checkpoint, manifests and history.
    Train,
    /// Evaluate a trained model on labeled articles or embeddings.
    Eval(commands::eval::Args),
    /// Classify articles or embedding rows, one line each.
    Predict(commands::predict::Args),
    /// Compare tape gradients with central differences.
    Gradcheck(commands::gradcheck::Args),
}

/// Settings shared by every command.
#[derive(Debug)]
pub struct Globals {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub continue_on_error: bool,
}

impl Globals {
    pub fn seed(&self) -> u64 {
        self.config.train.seed
    }
}

/// A check ran to completion and failed.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(PipelineError::DivergedLoss { .. }) = cause.downcast_ref::<PipelineError>() {
            return 3;
        }
        if cause.downcast_ref::<CheckFailed>().is_some() {
            return 1;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build_global()?;
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let g = Globals {
        config,
        config_path: cli.config.clone(),
        out_dir,
        continue_on_error: cli.continue_on_error,
    };
    match cli.command {
        Command::Stats(a) => commands::stats::run(&g, &a),
        Command::Preprocess(a) => commands::preprocess::run(&g, &a),
        Command::Train => commands::train::run(&g),
        Command::Eval(a) => commands::eval::run(&g, &a),
        Command::Predict(a) => commands::predict::run(&g, &a),
        Command::Gradcheck(a) => commands::gradcheck::run(&g, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
