//! `cbsim` command-line runner.
//!
//! Every run reads one JSON input, dispatches to one engine and writes one
//! report. Exit status: 0 on success, 2 on validation errors, 3 when an
//! engine fails (optimizer breakdown, conditioning).

mod commands;
mod config;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context as _;
use clap::Parser;

use crate::config::{Cli, ExperimentConfig, Invalid};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((summary, code)) => {
            println!("{summary}");
            ExitCode::from(code)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<(String, u8)> {
    let cfg = ExperimentConfig::from_cli(cli)?;
    let command = commands::lookup(&cfg.command)?;
    let input = config::read_input(&cfg.input_path)?;
    let ctx = cfg.context(command.default_budget())?;

    let started = Instant::now();
    let outcome = command.run(&input, &ctx)?;
    let elapsed = started.elapsed();

    let code = if outcome.failure.is_some() { 3 } else { 0 };
    report::write(&cfg, &ctx, &input, &outcome, elapsed)
        .with_context(|| format!("writing {}", cfg.output_path.display()))?;
    let summary = match &outcome.failure {
        Some(msg) => format!("{}: engine failure: {msg} (partial report in {})", cfg.command, cfg.output_path.display()),
        None => format!("{}: {} -> {}", cfg.command, outcome.summary, cfg.output_path.display()),
    };
    Ok((summary, code))
}

/// 2 for anything the user can fix in the input, 3 for engine failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
        {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<cbsim::Error>() {
            return commands::engine_exit_code(e);
        }
    }
    3
}
