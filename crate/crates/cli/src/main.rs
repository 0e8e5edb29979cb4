//! Command-line front end: data generation, cross-validated training,
//! evaluation, ablation and gradient checking.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use tabattn::Error;

use args::{Cli, Command};

/// Exit status for invalid input or configuration.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for failed numerical checks.
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::GradcheckFailure(_) | Error::SingularSystem(_) | Error::DegenerateBatch(_) => EXIT_NUMERICAL,
        Error::Io(_) => 1,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
