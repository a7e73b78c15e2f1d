mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, RunConfig};

/// Failure classes mapped to exit codes 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl From<ridgeshrink::Error> for Failure {
    fn from(e: ridgeshrink::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(cli.command, cli.flags).and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(paths) => {
            output::report(&paths);
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
