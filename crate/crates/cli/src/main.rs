//! `gimp`: simulate, price, verify and diagnose copula-coupled GARCH
//! martingale models.
//!
//! Exit codes: 0 success, 1 computation or verification failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use gimp_core::error::GimpError;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<GimpError> for Failure {
    fn from(e: GimpError) -> Self {
        if e.is_usage() {
            Failure::usage(e.to_string())
        } else {
            Failure::runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "gimp",
    version,
    about = "Copula-coupled GARCH martingale engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct RunArgs {
    /// Engine configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it. Falls back to GIMP_WORKERS.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long = "n-paths")]
    pub n_paths: Option<usize>,
    /// Output file (CSV).
    #[arg(long)]
    pub out: Option<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write them as CSV plus a JSON sidecar.
    Simulate(RunArgs),
    /// Price the configured payoffs by Monte Carlo.
    Price {
        #[command(flatten)]
        run: RunArgs,
        /// Price only the payoff with this name (or kind, when unnamed).
        #[arg(long)]
        payoff: Option<String>,
        /// Append results to this CSV.
        #[arg(long = "results-csv")]
        results_csv: Option<String>,
    },
    /// Run the exact lattice checks.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Check this lattice file instead of the built-in suites.
        #[arg(long)]
        lattice: Option<PathBuf>,
        /// Number of random lattices (default 100 without a clock, 50 with).
        #[arg(long)]
        count: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Statistical tests on simulated paths.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        /// Read paths from this CSV instead of simulating.
        #[arg(long)]
        paths: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "martingale,granger,stability"
        )]
        tests: Vec<DiagnosticTest>,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        #[arg(long, default_value_t = 1)]
        lags: usize,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lattice,
    Timechange,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagnosticTest {
    Martingale,
    Granger,
    Stability,
    Mixture,
}

/// `--workers`, then GIMP_WORKERS.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("GIMP_WORKERS") {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            Failure::usage(format!(
                "GIMP_WORKERS must be a positive integer, got `{v}`"
            ))
        }),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Price {
            run,
            payoff,
            results_csv,
        } => commands::price(&run, payoff.as_deref(), results_csv.as_deref()),
        Command::Verify {
            suite,
            seed,
            lattice,
            count,
            workers,
            json,
        } => verify::verify(
            suite,
            seed,
            lattice.as_deref(),
            count,
            resolve_workers(workers)?,
            json,
        ),
        Command::Diagnose {
            run,
            paths,
            tests,
            significance,
            lags,
            bins,
        } => commands::diagnose(&run, paths.as_deref(), &tests, significance, lags, bins),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
