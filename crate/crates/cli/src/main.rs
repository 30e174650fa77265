//! `pacmet`: sweeps, solves and bounds for discretized metrology problems.

mod args;
mod commands;
mod error;
mod output;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::PhaseSweep(a) => commands::phase_sweep(a),
        Command::ToleranceSweep(a) => commands::tolerance_sweep(a),
        Command::Sdp(a) => commands::sdp(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::RateFit(a) => commands::rate_fit(a),
        Command::Smap(a) => commands::smap(a),
    }
}

/// Worker count from PACMET_THREADS, if set.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("PACMET_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("PACMET_THREADS='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = thread_cap().and_then(|cap| match cap {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(|| run(&cli)),
        None => run(&cli),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
