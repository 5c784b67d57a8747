//! Command-line driver wiring corpora → buckets → runs → reports.
//!
//! Commands: `synth`, `sample`, `verify`, `run`, `report`, `analyze`.
//! Every command is a pure function of its inputs and seeds; re-running
//! with identical arguments produces byte-identical output files.

pub mod commands;
pub mod config;
pub mod layout;
pub mod plot;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "xlt",
    about = "Few-shot crosslingual transfer benchmark harness",
    version
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment config file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel cells/runs (default 1).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset manifest path (overrides the config's).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic classification task (manifest plus TSV splits)
    /// for demos and smoke tests.
    Synth(commands::synth::SynthArgs),
    /// Sample buckets for each (task, language, K) cell and verify them.
    Sample(commands::sample::SampleArgs),
    /// Re-check previously written bucket files.
    Verify(commands::verify::VerifyArgs),
    /// Source-train and target-adapt over buckets, writing results CSVs.
    Run(commands::run::RunArgs),
    /// Aggregate results into tables, histograms, gains, and correlations.
    Report(commands::report::ReportArgs),
    /// Bucket/prediction diagnostics: overlap matrices, presence splits,
    /// confusion matrices, lexical overlap, attention deltas.
    Analyze(commands::analyze::AnalyzeArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => commands::synth::run(&cli.global, &args),
        Command::Sample(args) => commands::sample::run(&cli.global, &args),
        Command::Verify(args) => commands::verify::run(&cli.global, &args),
        Command::Run(args) => commands::run::run(&cli.global, &args),
        Command::Report(args) => commands::report::run(&cli.global, &args),
        Command::Analyze(args) => commands::analyze::run(&cli.global, &args),
    }
}
