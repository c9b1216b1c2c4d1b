//! `nepkit` command-line entry point.
//!
//! Exit codes: 0 success, 1 validation failure (bad input data, failed
//! checks), 2 configuration error (bad flags, config or routing).

mod args;
mod commands;
mod ingest;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Error classes that decide the exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Validation(String),
}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Failure::Config(msg.into()).into()
}

pub fn validation_err(msg: impl Into<String>) -> anyhow::Error {
    Failure::Validation(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Config(_) => 2,
                Failure::Validation(_) => 1,
            };
        }
        if cause.downcast_ref::<nepkit::config::ConfigError>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
