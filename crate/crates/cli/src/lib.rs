//! Command-line driver for the QCBM landscape pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qcbm", version, about = "Train QCBM ensembles and map their loss landscape")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Use infinite-shot probabilities everywhere.
    #[arg(long, global = true)]
    pub exact: bool,
    /// Pairs scanned by `barriers`: `all` or `sample:K`.
    #[arg(long, global = true, value_name = "all|sample:K")]
    pub pairs: Option<String>,
    /// Down-selected minima joined by `neb`, e.g. `0,1`.
    #[arg(long, global = true, value_name = "I,J")]
    pub pair: Option<String>,
    /// Down-selected minima spanning the `grid` plane, e.g. `0,1,2`.
    #[arg(long, global = true, value_name = "I,J,K")]
    pub triple: Option<String>,
    /// Make `cluster` keep centers inside the confidence interval rather than below its upper bound.
    #[arg(long, global = true)]
    pub two_sided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train the ensemble and write runs.jsonl.
    Train,
    /// Cluster final parameters and down-select minima.
    Cluster,
    /// Straight-line barriers between down-selected minima.
    Barriers,
    /// Nudged elastic band between two down-selected minima.
    Neb,
    /// Loss over the plane through three down-selected minima.
    Grid,
    /// Training traces and plateau flags.
    Traces,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Cluster => "cluster",
            Command::Barriers => "barriers",
            Command::Neb => "neb",
            Command::Grid => "grid",
            Command::Traces => "traces",
        }
    }
}

/// Rejects stage-specific flags passed to another stage.
fn check_flag_scope(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let scoped = [
        ("--pairs", c.pairs.is_some(), Command::Barriers),
        ("--pair", c.pair.is_some(), Command::Neb),
        ("--triple", c.triple.is_some(), Command::Grid),
        ("--two-sided", c.two_sided, Command::Cluster),
    ];
    match scoped.iter().find(|(_, set, owner)| *set && *owner != cli.command) {
        Some((flag, _, owner)) => Err(CliError::Config(format!(
            "{flag} applies to `{}`, not `{}`",
            owner.name(),
            cli.command.name()
        ))),
        None => Ok(()),
    }
}

/// Effective configuration: file, then flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    check_flag_scope(cli)?;
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        config.out = out.clone();
    }
    if cli.common.exact {
        config.exact = true;
    }
    if cli.common.two_sided {
        config.minima.two_sided = true;
    }
    if let Some(p) = &cli.common.pairs {
        config.landscape.pairs = p.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = resolve_config(cli)?;
    let workers = match cli.common.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => w,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let ctx = Context {
        out: config.out.clone(),
        config,
    };
    output::ensure_dir(&ctx.out)?;
    pool.install(|| match cli.command {
        Command::Train => commands::train(&ctx),
        Command::Cluster => commands::cluster(&ctx),
        Command::Barriers => commands::barriers(&ctx),
        Command::Neb => commands::neb(&ctx, cli.common.pair.as_deref()),
        Command::Grid => commands::grid(&ctx, cli.common.triple.as_deref()),
        Command::Traces => commands::traces(&ctx),
    })
}
