//! `hazardrag`: ingest, index, ask, genqa, eval and desk.
//!
//! Exit status: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hazardrag::{ChunkStrategy, Hazard, PipelineVariant};

use crate::commands::RunSpec;
use crate::config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "hazardrag", version, about = "Hazard-aware retrieval-augmented question answering")]
pub struct Cli {
    /// `key = value` settings file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Index file to read or write.
    #[arg(long, global = true, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Write inference traces here (JSON for ask, JSONL for eval).
    #[arg(long, global = true, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Seeds the hash embedder and the desk world.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Override any setting, e.g. `--set provider=script`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk documents into a JSONL chunk file.
    Ingest {
        /// Document files or directories (.json, .txt, .md).
        inputs: Vec<PathBuf>,
        #[arg(long)]
        strategy: Option<ChunkStrategy>,
        /// Hazard for plain-text documents without a `Hazard:` header.
        #[arg(long)]
        hazard: Option<Hazard>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Embed a chunk file into an index.
    Index {
        chunks: PathBuf,
        /// Defaults to the configured index path.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Answer one question.
    Ask {
        question: String,
        /// One per choice, in order; four make a multiple-choice question.
        #[arg(long = "option", value_name = "TEXT")]
        options: Vec<String>,
        #[arg(long)]
        variant: Option<PipelineVariant>,
    },
    /// Generate a True/False and Multiple-Choice dataset from documents.
    Genqa {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        hazard: Option<Hazard>,
        #[arg(long, short)]
        out: PathBuf,
        /// Replace an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a dataset under one or more configurations.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// `VARIANT` or `VARIANT@INDEX`; repeat to compare, first is the baseline.
        #[arg(long = "run", value_name = "VARIANT[@INDEX]")]
        runs: Vec<RunSpec>,
        /// JSON report (one report, or the comparison when several runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-item CSV; with several runs, one file per run.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build the synthetic desk benchmark and compare pipeline variants on it.
    Desk {
        #[arg(long, short)]
        out: PathBuf,
        /// Variants to compare, first is the baseline.
        #[arg(long = "variant")]
        variants: Vec<PipelineVariant>,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("HAZARDRAG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
