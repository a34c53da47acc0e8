//! `iottrust` — batch front end for the trust-model pipeline.
//!
//! Subcommands cover the full workflow: `simulate` or `filter` + `ingest`
//! produce datasets, `interpolate` inflates them, `train` fits a model,
//! and `assess`, `significance`, `evaluate`, `ablate`, and `benchmark`
//! interrogate it. Exit codes: 0 success, 2 usage/input error, 3 runtime
//! failure. Set `IOTTRUST_LOG={error,info,debug}` to adjust logging.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("IOTTRUST_LOG", "error"))
        .init();
    match commands::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
