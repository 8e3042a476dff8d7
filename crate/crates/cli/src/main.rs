//! `pdmp-harvest` batch command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pdmp_harvest::solver::SolverError;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "pdmp-harvest",
    version,
    about = "Optimal harvesting under random biomass and growth-rate jumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `simulate.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the value function and the critical value.
    Solve(Common),
    /// Simulate the optimally controlled process and estimate its value.
    Simulate(Common),
    /// Slopes of the critical value in the jump rates and the growth rate.
    Sensitivity(Common),
    /// Run the verification checks and write `verify_report.csv`.
    Verify(Common),
}

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;
const EXIT_CONFIG: u8 = 4;

fn load(common: &Common) -> Result<config::Resolved, ConfigError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(seed) = common.seed {
        cfg.simulate.seed = seed;
    }
    cfg.resolve(Path::new("."))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(SolverError::NotConverged { .. }) = cause.downcast_ref::<SolverError>() {
            return EXIT_NOT_CONVERGED;
        }
        if cause.downcast_ref::<verify::VerificationFailed>().is_some() {
            return EXIT_VERIFY_FAILED;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&config::Resolved) -> anyhow::Result<()>) = match &cli.command {
        Command::Solve(c) => (c, commands::cmd_solve),
        Command::Simulate(c) => (c, commands::cmd_simulate),
        Command::Sensitivity(c) => (c, commands::cmd_sensitivity),
        Command::Verify(c) => (c, verify::cmd_verify),
    };
    let resolved = match load(common) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&resolved) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
