//! Batch driver for the coupled-system solver: parse a run configuration,
//! execute one pipeline stage and emit text artifacts.
//!
//! Exit codes: 0 success, 2 flagged non-convergence (partial artifacts
//! written), 1 configuration/parse/IO errors (no artifacts).

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod io;
mod pipeline;

use pipeline::Outcome;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String, std::io::Error),
    Core(gpsep::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(
    name = "gpsep",
    about = "Variational solver for coupled cubic elliptic systems with phase segregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the [output] dir of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the [seed] rng_seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the first k Dirichlet eigenpairs of the configured grid.
    Eig(RunArgs),
    /// Seed, descend and Newton-polish one critical point.
    Solve(RunArgs),
    /// Continue a solved state along the configured beta schedule.
    Continue(RunArgs),
    /// Re-analyze stored fields (u.csv / v.csv in the output dir).
    Analyze(RunArgs),
    /// Monte Carlo probe of the linking lower bound.
    Probe(RunArgs),
}

fn load_config(args: &RunArgs) -> Result<config::RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(args.config.display().to_string(), e))?;
    let mut cfg = config::parse_config(&text)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Eig(args) => pipeline::run_eig(&load_config(args)?),
        Command::Solve(args) => pipeline::run_solve(&load_config(args)?),
        Command::Continue(args) => pipeline::run_continue(&load_config(args)?),
        Command::Analyze(args) => pipeline::run_analyze(&load_config(args)?),
        Command::Probe(args) => pipeline::run_probe(&load_config(args)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("warning: run did not fully converge; partial artifacts written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
