//! `tierfuse`: dataset synthesis, two-phase ensemble training, evaluation
//! tables, and report assembly, all driven by one central config file.

mod artifacts;
mod commands;
mod config;
mod layout;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{Ctx, Phase};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "tierfuse",
    version,
    about = "Two-tier adaptive weighted ensemble: synthetic data, two-phase training, evaluation"
)]
struct Cli {
    /// Run configuration TOML; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file and TIERFUSE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset(s) described by the config.
    SynthData,
    /// Run one training phase.
    Train {
        #[arg(long, value_enum)]
        phase: Phase,
    },
    /// Emit the per-family + ensemble metric table on one dataset.
    Evaluate {
        /// Dataset tag to evaluate on (default: the training dataset).
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Evaluate artifacts on a different dataset without retraining.
    CrossEval {
        /// Dataset tag to transfer to (default: the shifted dataset).
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Assemble tables, the performance matrix, and weight trajectories.
    Report,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    } else if let Ok(env_out) = std::env::var("TIERFUSE_OUT") {
        if !env_out.is_empty() {
            config.out_dir = PathBuf::from(env_out);
        }
    }
    config.validate()?;
    let ctx = Ctx::new(config);
    match cli.command {
        Command::SynthData => commands::synth_data(&ctx),
        Command::Train { phase } => commands::train(&ctx, phase),
        Command::Evaluate { dataset } => commands::evaluate(&ctx, dataset),
        Command::CrossEval { dataset } => commands::cross_eval(&ctx, dataset),
        Command::Report => commands::report(&ctx),
    }
}
