//! The `tpp` command line: generate corpora, train, decode, reorder,
//! evaluate and summarise.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tpp_core::{HeadKind, Split, Task};

pub use config::{OrderSource, Paths, RunConfig};
pub use error::{Failure, FailureKind};

#[derive(Debug, Parser)]
#[command(
    name = "tpp",
    version,
    about = "Token path prediction for form-like documents"
)]
pub struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for document-parallel stages (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the train split and write a checkpoint.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        head: Option<HeadKind>,
        /// Order of the training inputs.
        #[arg(long, value_enum)]
        order: Option<OrderSource>,
    },
    /// Predict one split with a checkpoint.
    Decode {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        order: Option<OrderSource>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Write a copy of the corpus whose documents carry a predicted `order`.
    Reorder {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        order: Option<OrderSource>,
    },
    /// Score predictions against the corpus.
    Eval {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Order under which to measure the continuous entity rate.
        #[arg(long, value_enum)]
        order: Option<OrderSource>,
        /// Restrict to one split.
        #[arg(long)]
        split: Option<Split>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported on standard error as one JSON record.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let failure = Failure::validation(e.kind().to_string())
                .with_details(vec![e.to_string().trim().to_owned()]);
            eprintln!("{}", failure.record());
            return failure.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("{}", failure.record());
            failure.exit_code()
        }
    }
}
