//! Command-line front end: `train`, `eval`, `prune`, `report` and `synth`.

mod commands;
mod manifest;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use manifest::{run_id, RunManifest};
pub use report::{parse_metrics, render_report, MetricsSeries};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGED: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "sparsevd", version, about = "Sparse variational dropout for LSTMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint whose weights seed the run.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// log α pruning threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// `key=value` overrides applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoint, metrics and manifest into --out.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Mean-weight quality of a checkpoint on one split.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also evaluate the model pruned at this threshold.
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        /// `key=value` overrides of the checkpoint's config (e.g. data=PATH).
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Prune a sparse-vd checkpoint and write a CSR export.
    Prune {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = crate::sparsity::DEFAULT_THRESHOLD, allow_negative_numbers = true)]
        threshold: f64,
        /// Export path; defaults to `<checkpoint stem>.sparse.svdx`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the paired pruned/unpruned evaluation.
        #[arg(long)]
        no_eval: bool,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Merge metrics files into a CSV series and a summary table.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Comma-separated series labels, one per file.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// CSV destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic train/valid/test files for a task.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        /// Output path prefix.
        #[arg(long)]
        out: String,
    },
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Config(_) => exit::CONFIG,
            Error::Data(_) => exit::DATA,
            Error::Divergence(_) => exit::DIVERGED,
            _ => exit::OTHER,
        };
        Self { code, error }
    }
}

impl CliError {
    pub(crate) fn data(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => exit::CONFIG,
            Error::Divergence(_) => exit::DIVERGED,
            _ => exit::DATA,
        };
        Self { code, error }
    }
}

/// Run a parsed command; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Train { run, out } => commands::train(&run, &out),
        Command::Eval {
            checkpoint,
            split,
            threshold,
            overrides,
        } => commands::eval(&checkpoint, &split, threshold, &overrides),
        Command::Prune {
            checkpoint,
            threshold,
            out,
            no_eval,
            overrides,
        } => commands::prune(&checkpoint, threshold, out.as_deref(), no_eval, &overrides),
        Command::Report { metrics, labels, out } => commands::report(&metrics, &labels, out.as_deref()),
        Command::Synth { run, out } => commands::synth(&run, &out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.error);
            e.code
        }
    }
}

/// Parse `std::env::args` and run.
pub fn main() -> i32 {
    run(Cli::parse())
}
