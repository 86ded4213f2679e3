//! Command-line surface and file formats for the restricted-flow policy
//! library: train / eval / verify / density / bench over JSON configs and
//! checkpoints.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or invalid
//! config, 3 checkpoint format/version mismatch.

use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod verify;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable files, invalid configs. Exit 2.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or version-mismatched checkpoints. Exit 3.
    #[error("{0}")]
    Format(String),
    /// A verification suite reported failures. Exit 1.
    #[error("verification failed")]
    CheckFailed,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Format(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "rnf",
    version,
    about = "Restricted normalizing flow policies: training, evaluation and conformance checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics plus checkpoints.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for metrics.csv and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpointed policy (mean or sampled actions).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episode count; defaults to the config echoed in the checkpoint.
        #[arg(long)]
        episodes: Option<usize>,
        /// Act with the analytic mean or with policy samples.
        #[arg(long, value_enum)]
        mode: Option<config::ModeName>,
        /// Evaluation seed; defaults to the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the statistical conformance suite and print a JSON report.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: verify::Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deliberately corrupt one case per check (negative control).
        #[arg(long, hide = true, default_value_t = false)]
        inject_fault: bool,
    },
    /// Export a density slice of the policy at a state as CSV.
    Density {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated state vector.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        /// Action dimension to sweep.
        #[arg(long, default_value_t = 0)]
        dim: usize,
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, default_value_t = 201)]
        n: usize,
        /// Write to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency percentiles of one action decision (inference only).
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Timed calls per path (minimum 100).
        #[arg(long, default_value_t = 1000)]
        calls: usize,
    },
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, out: out_dir } => commands::train(&config, &out_dir, out),
        Command::Eval { checkpoint, episodes, mode, seed } => {
            commands::eval(&checkpoint, episodes, mode, seed, out)
        }
        Command::Verify { suite, seed, inject_fault } => {
            let reports = verify::run_suite(suite, seed, inject_fault);
            writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
            if reports.iter().all(|r| r.pass) {
                Ok(())
            } else {
                Err(CliError::CheckFailed)
            }
        }
        Command::Density { checkpoint, state, dim, lo, hi, n, out: out_file } => {
            commands::density(&checkpoint, &state, dim, lo, hi, n, out_file.as_ref(), out)
        }
        Command::Bench { checkpoint, calls } => commands::bench(&checkpoint, calls, out),
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(format!("json error: {e}"))
    }
}

/// Parse and run; returns the process exit code. Command output (JSON
/// reports, CSV) goes to `out`; diagnostics go to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 2;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::CheckFailed) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
