use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use imax_calib_cli::args::Cli;
use imax_calib_cli::diag::diag;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            diag(&[("error", "usage"), ("message", first)]);
            return ExitCode::from(2);
        }
    };
    match imax_calib_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            diag(&[("error", e.kind()), ("message", &e.to_string())]);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
