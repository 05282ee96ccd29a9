//! `saga` — drive the attention kernels from the command line.
//!
//! Subcommands: `check` (equivalence suite), `gradcheck` (finite-difference
//! verification), `rank` (state-rank sweep), `flops` (analytic vs measured
//! multiply counts), `bench` (scaling benchmarks).
//!
//! Exit codes are a stable contract for CI: 0 pass, 1 check failure,
//! 2 usage or config error, 3 I/O error.

mod commands;
mod config;
mod output;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "saga", version, about = "Gated linear attention verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the kernel equivalence and invariant suite
    Check(commands::check::CheckArgs),
    /// Verify analytic gradients against central finite differences
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Rank sweep of the aggregated state over token diversity
    Rank(commands::rank::RankArgs),
    /// Analytic cost model vs instrumented multiply counts
    Flops(commands::flops::FlopsArgs),
    /// Wall-clock scaling benchmarks with log-log exponent fits
    Bench(commands::bench::BenchArgs),
}

/// Failures that abort a command, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed or contradictory config: exit 2.
    Usage(String),
    /// Filesystem trouble: exit 3.
    Io(String),
    /// A kernel failed at runtime (not a mere check mismatch): exit 1.
    Kernel(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
            CliError::Kernel(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Kernel(msg) => write!(f, "kernel error: {msg}"),
        }
    }
}

impl From<saga_kernels::KernelError> for CliError {
    fn from(err: saga_kernels::KernelError) -> Self {
        use saga_kernels::KernelError::*;
        match err {
            Contract { .. } | DimMismatch { .. } => CliError::Usage(err.to_string()),
            SvdNoConvergence { .. } | NonFinite { .. } => CliError::Kernel(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(args) => commands::check::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Rank(args) => commands::rank::run(args),
        Command::Flops(args) => commands::flops::run(args),
        Command::Bench(args) => commands::bench::run(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            err.exit_code()
        }
    }
}
