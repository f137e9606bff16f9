//! Command-line pipeline: ingest, split, retrieve, stats, train, extract,
//! eval and export-templates, driven by one flat config file.

pub mod commands;
pub mod config;
pub mod error;
mod fsio;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bridgekg", version, about = "Bridge-concept extraction pipeline")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads; same as `--set workers=N`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Split a raw dataset into train/dev/test files.
    Split,
    /// Build a graph index from an assertions file.
    Ingest,
    /// Retrieve subgraphs and supervision into a cache.
    Retrieve,
    /// Hop-requirement and subgraph-size statistics.
    Stats,
    /// Train a model from a subgraph cache.
    Train,
    /// Write concept bundles for a dataset.
    Extract,
    /// Score bundles against references.
    Eval,
    /// Render template stubs from bundles.
    ExportTemplates,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    let cfg = PipelineConfig::resolve(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Split => commands::split(&cfg),
        Command::Ingest => commands::ingest(&cfg),
        Command::Retrieve => commands::retrieve(&cfg),
        Command::Stats => commands::stats(&cfg).map(|t| print!("{t}")),
        Command::Train => commands::train_model(&cfg),
        Command::Extract => commands::extract(&cfg),
        Command::Eval => commands::eval(&cfg).map(|t| print!("{t}")),
        Command::ExportTemplates => commands::export_templates(&cfg),
    }
}
