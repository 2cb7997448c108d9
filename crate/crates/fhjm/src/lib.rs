//! Command-line front end for the `fhjm-core` model: configuration, parallel
//! path generation, CSV and JSON output with a hashed manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod paths;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Model;
use crate::config::{ExperimentConfig, Resolved};
pub use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(
    name = "fhjm",
    version,
    about = "Forward-rate simulation and no-arbitrage checks under fractional noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate forward curves, bond prices and discounted prices.
    Simulate(RunArgs),
    /// Tabulate the no-arbitrage drift and compare it with closed forms.
    Drift(RunArgs),
    /// Drift identity, quasi-martingale and oscillation checks.
    Check(RunArgs),
    /// Consistency of a curve family with the model.
    Consistency(RunArgs),
    /// Ledger of trading strategies under proportional costs.
    Portfolio(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Drift(_) => "drift",
            Command::Check(_) => "check",
            Command::Consistency(_) => "consistency",
            Command::Portfolio(_) => "portfolio",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Drift(a)
            | Command::Check(a)
            | Command::Consistency(a)
            | Command::Portfolio(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, env = "FHJM_OUT_DIR", default_value = "fhjm-out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured number of paths.
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        if let Some(mc) = cfg.monte_carlo.as_mut() {
            mc.seed = seed;
        }
        if let Some(c) = cfg.consistency.as_mut() {
            c.seed = seed;
        }
    }
    if let Some(n) = args.n_paths {
        match cfg.monte_carlo.as_mut() {
            Some(mc) => mc.n_paths = n,
            None => return Err(CliError::config("--n-paths needs a monte_carlo block")),
        }
    }
    Ok(())
}

/// Runs one command end to end.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    apply_overrides(&mut cfg, args)?;
    let resolved = Resolved::new(cfg)?;
    match args.threads {
        Some(0) => Err(CliError::config("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Numerics(format!("thread pool: {e}")))?
            .install(|| execute(&cli.command, resolved)),
        None => execute(&cli.command, resolved),
    }
}

fn execute(command: &Command, resolved: Resolved) -> Result<(), CliError> {
    let mut out = OutputDir::create(&command.args().out)?;
    let config = resolved.config.clone();
    match command {
        Command::Drift(_) => {
            commands::drift::run(&resolved, &mut out)?;
        }
        Command::Consistency(_) => {
            commands::consistency::run(&resolved, &mut out)?;
        }
        Command::Simulate(_) => commands::simulate::run(&Model::new(resolved)?, &mut out)?,
        Command::Check(_) => {
            let report = commands::check::run(&Model::new(resolved)?, &mut out)?;
            print!("{}", commands::check::table(&report));
        }
        Command::Portfolio(_) => {
            commands::portfolio::run(&Model::new(resolved)?, &mut out)?;
        }
    }
    out.write_manifest(command.name(), &config)
}
