use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use aqua::config::RunConfig;
use aqua::{cmd_eval, cmd_restore, cmd_synth, cmd_train};
use clap::{Parser, Subcommand};

/// Underwater image restoration with a learned transmission estimator.
#[derive(Debug, Parser)]
#[command(name = "aqua", version)]
struct Cli {
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with reference transmission maps.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the transmission network on a corpus.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Corpus directory holding `manifest.jsonl`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Starting checkpoint; a fresh seeded model when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Restore images with a trained checkpoint.
    Restore {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score restorations against their originals.
    Eval {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, value_names = ["ORIGINAL", "RESTORED"], required = true)]
        pair: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Synth { out } => {
            let n = cmd_synth(&cfg, &out)?;
            println!("wrote {n} samples to {}", out.display());
        }
        Command::Train { out, corpus, checkpoint } => {
            let corpus = corpus
                .or_else(|| cfg.corpus.clone())
                .context("no corpus given (use --corpus or the `corpus` key)")?;
            let checkpoint = checkpoint.or_else(|| cfg.checkpoint.clone());
            let done = cmd_train(&cfg, &corpus, checkpoint.as_deref(), &out)?;
            if let Some(last) = done.losses.last() {
                println!(
                    "trained {} epochs, final loss {last:.6}; wrote {}",
                    done.losses.len(),
                    done.checkpoint.display()
                );
            }
        }
        Command::Restore { out, checkpoint, inputs } => {
            let checkpoint = checkpoint
                .or_else(|| cfg.checkpoint.clone())
                .context("no checkpoint given (use --checkpoint or the `checkpoint` key)")?;
            let written = cmd_restore(&cfg, &checkpoint, &inputs, &out)?;
            println!("restored {} images into {}", written.len(), out.display());
        }
        Command::Eval { out, pair } => {
            let pairs: Vec<(PathBuf, PathBuf)> = pair
                .chunks_exact(2)
                .map(|p| (p[0].clone(), p[1].clone()))
                .collect();
            let done = cmd_eval(&cfg, &pairs, &out)?;
            println!(
                "evaluated {} pairs ({} skipped); wrote {}",
                done.rows,
                done.skipped.len(),
                done.report.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
