mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use laha::model::Variant;

use crate::config::{Overrides, RunConfig, Settings};
use crate::error::CliResult;

/// Label-aware attention text classifier.
#[derive(Parser, Debug)]
#[command(name = "laha", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model variant: sa, ia, sa+ia or laha.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Labels per document for predict and export-attention.
    #[arg(long, global = true)]
    topk: Option<usize>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the label co-occurrence graph from the training corpus.
    BuildGraph,
    /// Learn label embeddings with biased random walks and skip-gram.
    EmbedLabels,
    /// Train the classifier and write a checkpoint.
    Train {
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Score the test corpus and write a metrics report.
    Evaluate,
    /// Write the top-scored labels of each document.
    Predict {
        /// Document ids; all documents when omitted.
        #[arg(long = "doc")]
        docs: Vec<String>,
    },
    /// Export per-label word attention for one document.
    ExportAttention {
        #[arg(long = "doc")]
        doc: String,
    },
    /// Write a seeded synthetic train/test corpus.
    GenerateSynthetic,
    /// Train and evaluate every model variant from the same initialisation.
    Ablate,
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        variant: cli.variant,
        topk: cli.topk,
        out: cli.out,
    };
    let settings = Settings::resolve(file, cli.config.as_deref(), overrides);
    match cli.command {
        Command::BuildGraph => commands::build_graph(&settings),
        Command::EmbedLabels => commands::embed_labels(&settings),
        Command::Train { resume } => commands::train(&settings, resume),
        Command::Evaluate => commands::evaluate(&settings),
        Command::Predict { docs } => commands::predict(&settings, &docs),
        Command::ExportAttention { doc } => commands::export_attention_cmd(&settings, &doc),
        Command::GenerateSynthetic => commands::generate_synthetic(&settings),
        Command::Ablate => commands::ablate(&settings),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
