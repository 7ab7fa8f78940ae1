//! `codeverif`: operator entry points.
//!
//! Human-readable tables go to stdout; machine-readable records are written
//! to the files named by `--out` (or the output directory). Usage errors exit
//! with status 2, operational errors with status 1.

mod args;
mod judge;
mod pipeline;
mod service;
mod table;
mod testgen;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(cli.log.as_str())),
        )
        .init();
    let result = match cli.command {
        Command::GenTests(a) => testgen::run(a),
        Command::Judge(a) => judge::run_judge(a),
        Command::Verify(a) => verify::run(a),
        Command::Reward(a) => judge::run_reward(a),
        Command::Serve(a) => service::run_serve(a),
        Command::Work(a) => service::run_work(a),
        Command::Pipeline(a) => pipeline::run_pipeline(a),
        Command::Report(a) => pipeline::run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
