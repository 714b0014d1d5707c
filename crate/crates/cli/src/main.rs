mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::exit;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::USAGE),
            };
        }
    };
    let result = match &cli.command {
        Command::Explain(a) => commands::explain(a).map(|w| w.exit_status()),
        Command::Global(a) => commands::global(a).map(|w| w.exit_status()),
        Command::Synth(a) => commands::synth(a).map(|w| w.exit_status()),
        Command::Transform(a) => commands::transform(a).map(|()| exit::OK),
    };
    match result {
        Ok(exit::NOT_CONVERGED) => {
            eprintln!("osv: warning: estimates did not converge within --max-permutations; reports were written");
            ExitCode::from(exit::NOT_CONVERGED)
        }
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("osv: {e}");
            e.exit_code()
        }
    }
}
