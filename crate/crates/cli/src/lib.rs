//! Batch front end for the `imax-calib` toolkit.

pub mod args;
pub mod bundle;
pub mod commands;
pub mod diag;
pub mod error;
pub mod io;

use args::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Apply(a) => commands::apply(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::MiReport(a) => commands::mi(a),
    }
}
