//! Library side of the `mplm` command: argument types, CSV ingestion and the
//! three commands.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod mapping;

use args::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => commands::fit_command(a),
        Command::Cv(a) => commands::cv_command(a),
        Command::Simulate(a) => commands::simulate_command(a),
    }
}
