//! `ctoqw`: command-line front end for continuous-time open quantum walks.
//!
//! Exit status: 0 success, 1 parse or I/O error, 2 validation failure,
//! 3 numerical non-convergence, 4 precondition violation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use run::{CliError, Logger};

fn dispatch(cli: &Cli, ctx: &Context) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::precondition(format!("thread pool: {e}")))?;
    }
    if !(cli.tol > 0.0) {
        return Err(CliError::precondition(format!("--tol must be positive, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Validate(a) => commands::validate(ctx, a),
        Command::Evolve(a) => commands::evolve(ctx, a),
        Command::Simulate(a) => commands::simulate(ctx, a),
        Command::FirstPassage(a) => commands::first_passage(ctx, a),
        Command::Occupation(a) => commands::occupation(ctx, a),
        Command::Classify(a) => commands::classify(ctx, a),
        Command::Irreducible(a) => commands::irreducible(ctx, a),
        Command::Fixtures(a) => commands::fixtures(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(run::exit_status(oqw_core::ErrorClass::Parse)),
            };
        }
    };
    let ctx = Context { seed: cli.seed, tol: cli.tol, log: Logger::new(cli.json_logs) };
    match dispatch(&cli, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            ctx.log.error(&e.message);
            e.exit_code()
        }
    }
}
