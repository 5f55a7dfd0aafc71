//! `floqfreeze` command-line driver.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for usage or
//! configuration errors.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, FileConfig, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl From<floqfreeze::FreezeError> for CliError {
    fn from(e: floqfreeze::FreezeError) -> Self {
        CliError::Compute(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "floqfreeze",
    version,
    about = "Many-body freezing in a driven three-spin Ising ring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Q against drive frequency: exact, three-site closed form, infinite chain, incoherent model
    Sweep,
    /// mˣ(t) at sub-cycle resolution for one frequency
    Trace,
    /// Frequencies where J₀(2h₀/ω) vanishes
    FreezePoints {
        /// `lo:hi` in rad/s [default: 3:14]
        #[arg(long)]
        range: Option<String>,
    },
    /// Fit the decaying-oscillation model and undo the decay
    Fit(FitArgs),
    /// Synthesize an RF pulse for the one-period propagator
    Grape(GrapeArgs),
    /// Check the measured-Q table
    ValidateDataset {
        /// Table to check instead of the bundled one
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct FitArgs {
    /// CSV with header `t,mx`; without it a decayed simulated series is fitted
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Decay constant for the synthetic series (s) [default: 0.17]
    #[arg(long)]
    pub t_d: Option<f64>,
    /// Gaussian noise level for the synthetic series [default: 0.01]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Time between stroboscopic samples of the synthetic series (s) [default: 0.01]
    #[arg(long)]
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GrapeArgs {
    /// [default: 200]
    #[arg(long)]
    pub segments: Option<usize>,
    /// Segment duration in ms [default: 0.5]
    #[arg(long)]
    pub segment_ms: Option<f64>,
    /// RF amplitude bound in Hz [default: 1000]
    #[arg(long)]
    pub bound_hz: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop at ensemble fidelity 1 − tol [default: 0.01]
    #[arg(long)]
    pub tol: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let rc = RunConfig::resolve(&cli.common, &file)?;
    match cli.command {
        Command::Sweep => commands::sweep(&rc),
        Command::Trace => commands::trace(&rc),
        Command::FreezePoints { range } => {
            let range =
                config::parse_range(&config::pick(range, file.range.clone(), "3:14".into()))?;
            commands::freeze_points(&rc, range)
        }
        Command::Fit(args) => commands::fit(&rc, &file, &args),
        Command::Grape(args) => commands::grape(&rc, &file, &args),
        Command::ValidateDataset { table } => commands::validate_dataset(table.or(file.table)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
