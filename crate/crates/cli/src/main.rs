//! `appmatch`: generate corpora, train and evaluate intent-to-app models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Rejected before any work starts; exit code 2.
    Config(String),
    Runtime(appmatch::Error),
}

impl From<appmatch::Error> for CliError {
    fn from(e: appmatch::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "appmatch",
    version,
    about = "Intent-to-app recommendation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML, dotted keys allowed).
    #[arg(long)]
    config: PathBuf,
    /// Directory for all outputs; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its statistics.
    GenData(Common),
    /// Write statistics for the configured corpus.
    Stats(Common),
    /// Train (when the model needs it) and evaluate on the test split.
    Run(Common),
    /// One-shot experiment on unseen labels: nn vs matchnet.
    Oneshot(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    type Runner = fn(&ExperimentConfig, &std::path::Path) -> Result<(), CliError>;
    let (common, run): (&Common, Runner) = match &cli.command {
        Command::GenData(c) => (c, commands::gen_data),
        Command::Stats(c) => (c, commands::stats),
        Command::Run(c) => (c, commands::run),
        Command::Oneshot(c) => (c, commands::oneshot),
    };
    let result = ExperimentConfig::load(&common.config, common.seed).and_then(|cfg| {
        commands::precheck(&cli_kind(&cli.command), &cfg)?;
        run(&cfg, &common.out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("appmatch: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}

fn cli_kind(c: &Command) -> commands::Kind {
    match c {
        Command::GenData(_) => commands::Kind::GenData,
        Command::Stats(_) => commands::Kind::Stats,
        Command::Run(_) => commands::Kind::Run,
        Command::Oneshot(_) => commands::Kind::Oneshot,
    }
}
