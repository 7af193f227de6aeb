//! `corrnc`: simulate, solve and analyze correlation-based sparse source recovery.

mod commands;
mod config;
mod output;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "corrnc", version, about = "Sparse source recovery from cross-correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML sections; unknown keys are rejected).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "CORRNC_OUT")]
    out: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Single SNR in dB replacing the configured list (`inf` for noise-free).
    #[arg(long = "snr-db", global = true, value_name = "R", allow_hyphen_values = true)]
    snr_db: Option<f64>,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N", env = "CORRNC_THREADS")]
    threads: Option<usize>,

    /// Skip the restricted second-stage solve.
    #[arg(long = "no-stage2", global = true)]
    no_stage2: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw sources and write the correlation dataset(s).
    Simulate,
    /// Run the first stage (and the second unless disabled).
    Solve {
        /// Solve a dataset written by `simulate` instead of simulating.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Run only the second stage on a dataset.
    Recover {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// CSV with a `pixel` column; defaults to the true source pixels.
        #[arg(long, value_name = "PATH")]
        support: Option<PathBuf>,
    },
    /// Exact-support success rates over sparsity and sample count.
    PhaseDiagram,
    /// Smallest no-phantom weight that keeps pure noise out of the image.
    CalibrateTau,
    /// Cross-check the fast operators and solver against dense references.
    Selftest,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(corrnc_core::Error),
    Io(String),
    /// Checks that ran but did not pass.
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Failed(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) => write!(f, "invalid input: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<corrnc_core::Error> for CliError {
    fn from(e: corrnc_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        snr_db: cli.snr_db,
        threads: cli.threads,
        no_stage2: cli.no_stage2,
    };
    if let Some(n) = overrides.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Simulate => commands::simulate(config_path, &overrides),
        Command::Solve { data } => commands::solve(config_path, data.as_deref(), &overrides),
        Command::Recover { data, support } => commands::recover(&data, support.as_deref(), &overrides),
        Command::PhaseDiagram => commands::phase_diagram(config_path, &overrides),
        Command::CalibrateTau => commands::calibrate_tau(config_path, &overrides),
        Command::Selftest => selftest::run(config_path, &overrides),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("corrnc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
