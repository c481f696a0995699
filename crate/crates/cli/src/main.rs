//! `ctow` command-line tool.

mod commands;
mod config;
mod error;
mod manifest;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ctow",
    version,
    about = "Co-training of boosted trees and a transductive SVM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validate methods over label rates and write a report.
    Run(commands::RunArgs),
    /// Correlation of tree/tree and TSVM/tree errors on one fold.
    Diversity(commands::DiversityArgs),
    /// Co-train on a CSV and save the model bundle.
    Train(commands::TrainArgs),
    /// Class and probabilities per row from a saved bundle.
    Predict(commands::PredictArgs),
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CTOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "CTOW_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Diversity(a) => commands::diversity(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
