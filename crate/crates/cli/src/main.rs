mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{Cli, Command, RunConfig};
use error::{CliError, EXIT_PARTIAL, EXIT_USAGE};

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let cfg = RunConfig::resolve(cli)?;
    match cfg.command {
        Command::Convergence => commands::run_convergence(&cfg),
        Command::Stability => commands::run_stability(&cfg),
        Command::Pde => commands::run_pde(&cfg),
        Command::Solve => commands::run_solve(&cfg),
        Command::List => commands::run_list(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(outcome) if outcome.partial => ExitCode::from(EXIT_PARTIAL),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
