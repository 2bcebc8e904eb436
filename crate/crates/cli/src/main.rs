//! `qexpert` — reproducible expert-ranking runs driven by a TOML config.
//!
//! Subcommands cover the whole pipeline: `synth` writes a toy corpus with
//! planted expertise, `ingest` validates datasets, `embed` trains user or
//! word vectors, `train` fits a ranking model and checkpoints the best-dev
//! epoch, `eval` scores a checkpoint on a held-out split, `rank` orders a
//! candidate pool for one question, and `grid` sweeps hyperparameter axes.
//!
//! Every command is deterministic given (config file, --seed): re-running
//! produces byte-identical artifacts. `QEXPERT_THREADS` caps the worker
//! pool used by parallel evaluation and embedding.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use qexpert_core::corpus::{DataFormat, Split};
use qexpert_core::train::ModelKind;

use commands::EmbedTarget;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "qexpert", version, about = "Rank community experts for questions")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override every seed derived from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset file format: tsv | jsonl (overrides the config).
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the configured splits; print a summary.
    Ingest,
    /// Train and save user or word vectors.
    Embed {
        /// Which vectors to train: users | words.
        target: String,
    },
    /// Train a ranking model and save the best-dev checkpoint.
    Train {
        /// Model to train: quser | qa (overrides the config).
        #[arg(long)]
        model: Option<String>,
        /// Run the configured hyperparameter grid instead of one fit.
        #[arg(long)]
        grid: bool,
        /// Grid report path (only with --grid).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's Top-1 accuracy on a split.
    Eval {
        /// Model checkpoint to load: quser | qa.
        #[arg(long)]
        model: Option<String>,
        /// Split to evaluate: train | dev | test1 | test2.
        #[arg(long)]
        split: Option<String>,
        /// Candidate pool size.
        #[arg(long)]
        k: Option<usize>,
        /// Report path (defaults under output_dir).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Rank a pool of user ids for one question.
    Rank {
        /// Model checkpoint to load: quser | qa.
        #[arg(long)]
        model: Option<String>,
        /// Question text (may be empty).
        question: String,
        /// File with one candidate user id per line.
        pool: PathBuf,
    },
    /// Sweep the [grid] axes and write one result row per cell.
    Grid {
        /// Report path (defaults under output_dir).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic corpus configured under [synth].
    Synth,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    cap_worker_threads()?;
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => RunConfig::load(path, cli.seed)?,
        None => RunConfig::defaults(cli.seed),
    };
    let format = match &cli.format {
        Some(name) => name.parse::<DataFormat>()?,
        None => config.data.format.0,
    };

    match cli.command {
        Command::Ingest => commands::cmd_ingest(&config, format),
        Command::Embed { target } => {
            commands::cmd_embed(&config, format, target.parse::<EmbedTarget>()?)
        }
        Command::Train { model, grid, out } => {
            commands::cmd_train(&config, format, parse_model(model.as_deref())?, grid, out)
        }
        Command::Eval {
            model,
            split,
            k,
            out,
        } => {
            let split = split.as_deref().map(str::parse::<Split>).transpose()?;
            commands::cmd_eval(&config, format, parse_model(model.as_deref())?, split, k, out)
        }
        Command::Rank {
            model,
            question,
            pool,
        } => commands::cmd_rank(&config, format, parse_model(model.as_deref())?, &question, &pool),
        Command::Grid { out } => commands::cmd_grid(&config, format, out),
        Command::Synth => commands::cmd_synth(&config),
    }
}

fn parse_model(name: Option<&str>) -> Result<Option<ModelKind>> {
    Ok(name.map(str::parse::<ModelKind>).transpose()?)
}

/// Honor `QEXPERT_THREADS` by sizing the global worker pool before any
/// parallel section runs. Unset or empty means the library default.
fn cap_worker_threads() -> Result<()> {
    match std::env::var("QEXPERT_THREADS") {
        Ok(raw) if !raw.trim().is_empty() => {
            let n: usize = raw
                .trim()
                .parse()
                .with_context(|| format!("QEXPERT_THREADS={raw:?} is not a thread count"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("worker pool already initialized")?;
            Ok(())
        }
        _ => Ok(()),
    }
}
