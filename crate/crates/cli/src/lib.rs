//! The `lts` command line: synthetic instance generation, single solves with
//! JSON output and a CSV benchmark harness.

mod bench;
mod gen;
mod solve;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};
use lts_core::Error as CoreError;

pub use bench::{cmd_bench, read_manifest, run_manifest, summarize, BenchArgs, BenchRow, Manifest, SummaryRow};
pub use gen::{cmd_gen, GenArgs};
pub use solve::{cmd_solve, solve_instance, SolveArgs, SolveOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_WARNING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lts", version, about = "Least trimmed squares regression solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-outlier instance and its ground truth.
    Gen(GenArgs),
    /// Solve one instance and print the result as JSON.
    Solve(SolveArgs),
    /// Run a benchmark manifest and print one CSV row per solve.
    Bench(BenchArgs),
}

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) => m,
        }
    }

    /// Problems with the input files. A missing column is the caller's mistake.
    pub(crate) fn from_data(err: CoreError) -> Self {
        match err {
            CoreError::MissingColumn(_) => Failure::Usage(err.to_string()),
            _ => Failure::Data(err.to_string()),
        }
    }
}

/// What a successful command reports back to `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Results were written but the solver flagged numerical trouble.
    Warning,
}

/// Parses `args` (program name first), runs the command with its primary
/// output on `out` and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match result {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Warning) => EXIT_WARNING,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}
