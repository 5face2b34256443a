//! Command-line front end: file loading, command dispatch and exit codes.
//!
//! Exit codes: 0 optimal (or feasible within the gap), 2 time limit, 3
//! infeasible, 4 bad input, 1 anything else.

pub mod args;
pub mod commands;
pub mod config;
pub mod solution;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::Outcome;
use commands::EXIT_INPUT;
use config::Defaults;

/// Runs one command and returns its outcome, or the error with its exit code.
pub fn execute(cli: &Cli, defaults: &Defaults) -> Result<Outcome, (i32, anyhow::Error)> {
    let result = match &cli.command {
        Command::Forward(a) => commands::forward(a),
        Command::Bounds(a) => commands::bounds(a, defaults),
        Command::Invert(a) => commands::invert(a, defaults),
        Command::Select(a) => commands::select(a, defaults),
        Command::Robust(a) => commands::robust(a, defaults),
        Command::Hybrid(a) => commands::hybrid(a, defaults),
        Command::Bench(a) => commands::bench(a, defaults),
    };
    result.map_err(|e| (error_code(&e), e))
}

fn error_code(e: &anyhow::Error) -> i32 {
    use reluinv::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Numerical(_) | E::Internal(_) | E::Limit(_) => 1,
                E::EmptyRegion(_) => commands::EXIT_INFEASIBLE,
                _ => EXIT_INPUT,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() || cause.is::<toml::de::Error>() {
            return EXIT_INPUT;
        }
    }
    // Remaining failures come from argument and file checks.
    EXIT_INPUT
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let defaults = match Defaults::load() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INPUT;
        }
    };
    match execute(&cli, &defaults) {
        Ok(out) => {
            let _ = std::io::stdout().write_all(out.stdout.as_bytes());
            out.code
        }
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            code
        }
    }
}
