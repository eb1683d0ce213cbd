//! The `driftqa` command: ingest, build-kb, run, evaluate and report.
//!
//! Exit codes are a stable contract: 0 on success, 1 on internal errors
//! and 2 on usage or configuration errors, including bad paths.

pub mod backends;
pub mod cli;
pub mod commands;
pub mod config;
pub mod paths;

use std::ffi::OsString;
use std::io::IsTerminal;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use thiserror::Error;

pub use cli::Cli;

/// An error caused by the invocation rather than by the program.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl std::fmt::Display) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn init_tracing(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .try_init();
}

/// Parse `args` and run the chosen subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(EXIT_USAGE));
        }
    };
    let parsed = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    init_tracing(parsed.verbose);
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    let result = match &parsed.command {
        cli::Command::Ingest(a) => commands::ingest(a),
        cli::Command::BuildKb(a) => commands::build_kb(a, sub),
        cli::Command::Run(a) => commands::run(a, sub),
        cli::Command::Evaluate(a) => commands::evaluate_cmd(a),
        cli::Command::Report(a) => commands::report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
