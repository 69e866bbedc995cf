//! qht: homodyne tomography experiments driven by a single JSON config.
//!
//! Subcommands cover the full workflow: `simulate` writes a quadrature
//! dataset, `reconstruct` and `observe` estimate density-matrix elements and
//! field observables with base and variance-optimized kernels, `gamma-scan`
//! tabulates the exact noise reduction, and `pathology` reproduces the two
//! standard failure modes (oversized member counts, coarse phase grids).
//!
//! Every run is deterministic under a fixed seed and config: output files
//! are byte-identical across repeats and thread counts.

mod commands;
mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::ExperimentConfig;
use report::Format;

/// Failure classes, one per exit code: config 1, I/O 2, numerical 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(why) => write!(f, "config error: {why}"),
            CliError::Io(why) => write!(f, "I/O error: {why}"),
            CliError::Numerical(why) => write!(f, "numerical failure: {why}"),
        }
    }
}

impl From<qht::Error> for CliError {
    fn from(e: qht::Error) -> Self {
        use qht::Error::*;
        match e {
            InvalidParameter { .. } | IndexOutOfRange { .. } | DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            Io(_) | Json(_) | Parse { .. } | BadDataset(_) => CliError::Io(e.to_string()),
            TruncationInsufficient { .. }
            | Overflow { .. }
            | IllConditioned { .. }
            | Singular { .. }
            | ResidualTooLarge { .. }
            | QuadratureNonConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qht",
    version,
    about = "Adaptive homodyne tomography: simulate quadrature data, \
             reconstruct density matrices, estimate observables, and probe \
             the failure modes of oversized fits and discrete phase grids."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (default: config `out_dir`, else the current dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: RAYON_NUM_THREADS, else all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Format of the report tables.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a quadrature dataset (CSV plus provenance sidecar).
    Simulate,
    /// Estimate density-matrix elements with base and optimized kernels.
    Reconstruct,
    /// Estimate observables with noise ratios against intrinsic noise.
    Observe,
    /// Exact noise-reduction tables versus member count and element indices.
    GammaScan,
    /// Failure-mode reports: oversized member counts, coarse phase grids.
    Pathology,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Help and version are successful outcomes; anything else is a
            // malformed invocation, which counts as a config error.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qht: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let cfg = ExperimentConfig::load(&path)?;
    let out_dir = cli
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let ctx = Context {
        cfg,
        out_dir,
        format: cli.format,
        seed_override: cli.seed,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Reconstruct => commands::reconstruct(&ctx),
        Command::Observe => commands::observe(&ctx),
        Command::GammaScan => commands::gamma_scan(&ctx),
        Command::Pathology => commands::pathology(&ctx),
    }
}
