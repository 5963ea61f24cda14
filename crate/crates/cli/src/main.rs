//! Command-line driver: synthetic data generation, the three training
//! scenarios, evaluation and export.

mod config;
mod data;
mod error;
mod eval;
mod export;
mod gen;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::Result;
use crate::train::{Role, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "fedtopic", version, about = "Federated neural topic modeling")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate synthetic node corpora with known topics.
    GenSynthetic {
        config: PathBuf,
        /// Override a config key (`key=value`); repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured scenarios and write checkpoints.
    Train {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run only one side of a tcp federation.
        #[arg(long, value_enum)]
        role: Option<Role>,
        #[arg(long)]
        client_id: Option<u32>,
        /// Listen address of the server role.
        #[arg(long, env = "FEDTOPIC_BIND")]
        bind: Option<String>,
        /// Server address for the client role.
        #[arg(long, env = "FEDTOPIC_SERVER")]
        server: Option<String>,
    },
    /// Score checkpoints against ground truth and with AMWMD.
    Eval {
        /// Dataset directory (or a tree of them).
        #[arg(long)]
        dataset: PathBuf,
        /// Directory of checkpoints mirroring the dataset tree.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Extra checkpoints as `name=path`.
        checkpoints: Vec<String>,
        /// Word embeddings for AMWMD (`E <dim>` header, then `term v1 .. vE`).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// CSV file to append scores to.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only evaluate repetitions `run0 .. run<R-1>`.
        #[arg(long)]
        runs: Option<usize>,
        /// Add the expected TSS of independent random topics, averaged over N draws.
        #[arg(long, value_name = "N")]
        baseline: Option<usize>,
        /// Also score the true model against itself.
        #[arg(long)]
        truth: bool,
        /// Words per topic description.
        #[arg(long, default_value_t = fedtopic::eval::DEFAULT_TOP_N)]
        top_n: usize,
        /// Weight description words equally.
        #[arg(long)]
        uniform_weights: bool,
    },
    /// Write a checkpoint's topic-word matrix as TSV.
    ExportBetas {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print the top N words of every topic.
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Infer document-topic proportions for a corpus.
    Infer {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::GenSynthetic { config, overrides, out } => {
            let mut cfg = Config::load(&config)?;
            cfg.apply_overrides(&overrides)?;
            for dir in gen::gen_synthetic(&cfg, out.as_deref())? {
                println!("{}", dir.display());
            }
        }
        Cmd::Train {
            config,
            overrides,
            role,
            client_id,
            bind,
            server,
        } => train::train(&TrainArgs {
            config_path: &config,
            overrides: &overrides,
            role,
            client_id,
            bind,
            server,
        })?,
        Cmd::Eval {
            dataset,
            models,
            checkpoints,
            embeddings,
            out,
            runs,
            baseline,
            truth,
            top_n,
            uniform_weights,
        } => {
            let rows = eval::eval(&eval::EvalArgs {
                dataset: &dataset,
                models: models.as_deref(),
                checkpoints: &checkpoints,
                embeddings: embeddings.as_deref(),
                out: out.as_deref(),
                runs,
                baseline,
                truth,
                top_n,
                uniform: uniform_weights,
            })?;
            for (label, metric, mean, n) in eval::summarize(&rows) {
                println!("{label}\t{metric}\t{mean:.6}\t(n={n})");
            }
        }
        Cmd::ExportBetas { checkpoint, out, top_n } => {
            print!("{}", export::export_betas(&checkpoint, &out, top_n)?);
        }
        Cmd::Infer { checkpoint, corpus, out } => export::infer(&checkpoint, &corpus, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
