mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 1 property or threshold failure, 2 configuration
/// error, 3 numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("property failure: {0}")]
    Property(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<latticenf::Error> for CliError {
    fn from(e: latticenf::Error) -> Self {
        use latticenf::Error::*;
        let msg = e.to_string();
        match e {
            EmptySupport | InvalidBox(_) | InvalidPerturbation(_) | EpsTooLarge { .. } | InvalidInput(_) | Io(_)
            | Json(_) => CliError::Config(msg),
            ResonantTerm(_) | SmallDivisorViolation { .. } | BoundViolation { .. } | PreconditionViolated(_) => {
                CliError::Property(msg)
            }
            FlowIntegrationFailure(_) | NotDiagonal(_) | StepUnstable { .. } => CliError::Numerical(msg),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "latticenf", version, about = "Normal forms, non-resonance and dynamics for random lattice oscillators")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files (created if missing).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the algebraic property suites and print a JSON summary.
    Selftest {
        #[arg(long, hide = true)]
        corrupt_bracket_sign: bool,
    },
    /// Check (eta, M)-non-resonance of the seeded frequencies.
    Nonres,
    /// Monte-Carlo estimate of the resonant fraction of inner parameters.
    Measure,
    /// Build the normal form stage by stage, with checkpoints.
    NormalForm {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Integrate the original dynamics and report action drift.
    Simulate {
        /// Multiplies the perturbation, skipping its coefficient check.
        #[arg(long, hide = true)]
        test_perturbation_scale: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = commands::Context::new(cli.config.as_deref(), cli.output, cli.seed);
    match cli.command {
        Command::Selftest { corrupt_bracket_sign } => commands::selftest(&ctx, corrupt_bracket_sign),
        Command::Nonres => commands::nonres(&ctx),
        Command::Measure => commands::measure(&ctx),
        Command::NormalForm { resume } => commands::normal_form(&ctx, resume.as_deref()),
        Command::Simulate { test_perturbation_scale } => commands::simulate(&ctx, test_perturbation_scale),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
