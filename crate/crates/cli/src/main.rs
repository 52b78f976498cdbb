//! `nnreach` command-line tool.
//!
//! Exit codes: 0 success or Safe, 1 Unknown verdict, 2 invalid input,
//! 3 analysis or output failure.

mod cli;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};

const EXIT_INPUT: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<nnreach::Error>() {
        Some(e) if e.is_input_error() => EXIT_INPUT,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ReachNn(a) => commands::reach_nn(a),
        Command::ComparePartition(a) => commands::compare_partition(a),
        Command::ReachNncs(a) => commands::reach_nncs_cmd(a),
        Command::Verify(a) => commands::verify_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
