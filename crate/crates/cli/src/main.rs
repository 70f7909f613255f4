//! `hgrnet`: synthetic data, three-step training, evaluation, inference and
//! parameter reports.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, checkpoint or
//! prerequisite problems, 3 numeric failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use hgrnet_core::Error;

use commands::Cli;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) => 1,
        Error::Numeric(_) => 3,
        Error::Shape(_)
        | Error::Checkpoint(_)
        | Error::Data(_)
        | Error::MissingPrerequisite(_)
        | Error::Io { .. }
        | Error::Image { .. } => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
