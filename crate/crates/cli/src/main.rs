//! `platoon` — command-line front end for the platoon control toolkit.
//!
//! Five subcommands cover the workflow: `train` learns a controller and
//! Lyapunov certificate, `verify` proves or refutes the certificate by
//! mixed-integer optimisation, `simulate` runs one closed-loop scenario,
//! `compare` benchmarks several controllers on matched seeds, and
//! `levelsets` exports a controller's input-output map for plotting.
//! Every command reads one JSON config document and writes its outputs
//! plus a reproducibility manifest into the chosen directory.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration (exit 1): parse errors, unknown keys,
    /// out-of-range values, or artifacts that do not fit their declared use.
    Config(String),
    /// Failure while executing a valid configuration (exit 2).
    Runtime(String),
    /// The verifier hit its wall-clock budget (exit 3).
    VerifierTimeout,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
            CliError::VerifierTimeout => write!(f, "verifier timed out"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::VerifierTimeout => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "platoon", version, about = "Learn, certify and benchmark platoon controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a controller and Lyapunov certificate by guided training
    Train(CommonArgs),
    /// Certify a controller/certificate pair by solving both conditions
    Verify(CommonArgs),
    /// Simulate one closed-loop scenario
    Simulate(CommonArgs),
    /// Benchmark several controllers on the same scenario, matched seeds
    Compare(CommonArgs),
    /// Export a controller's input-output map on a uniform grid
    Levelsets(CommonArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
pub struct CommonArgs {
    /// Path to the JSON config document
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed stored in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for simulation trials (1 = sequential)
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Wall-clock budget per verifier solve, in seconds
    #[arg(long)]
    timeout_s: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and are successes; genuine
            // argument errors are configuration errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Verify(args) => commands::verify(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Compare(args) => commands::compare(args),
        Command::Levelsets(args) => commands::levelsets(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
