//! `tweetsent`: batch front end for ingesting labeled tweets, training the
//! CNN-LSTM classifier and its CNN / LSTM baselines, evaluating, predicting
//! and exporting training curves.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error,
//! 3 numerical divergence during training.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{EvaluateArgs, HistoryExportArgs, IngestArgs, PredictArgs, TrainArgs};
use config::FileConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "tweetsent",
    version,
    about = "Three-class tweet sentiment with a CNN-LSTM network"
)]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a labeled CSV, write the class histogram and the split, cleaned
    /// and encoded partitions.
    Ingest(IngestArgs),
    /// Train a model on an ingested corpus; writes the model file and history.csv.
    Train(TrainArgs),
    /// Score a model; writes a metrics report and a confusion matrix.
    Evaluate(EvaluateArgs),
    /// Classify raw texts, printing the label and the three class probabilities.
    Predict(PredictArgs),
    /// Merge several history CSVs into one long-format CSV.
    HistoryExport(HistoryExportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &file),
        Command::Train(a) => commands::train(a, &file),
        Command::Evaluate(a) => commands::evaluate_cmd(a, &file),
        Command::Predict(a) => commands::predict(a),
        Command::HistoryExport(a) => commands::history_export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tweetsent: {e}");
            e.exit_code()
        }
    }
}
