//! `timelowfer`: train, evaluate and inspect time-aware LowFER models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use timelowfer::{Error, EvalMode, Split};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "timelowfer",
    version,
    about = "Temporal knowledge graph completion with time-aware LowFER",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write history, checkpoints and final metrics.
    Train {
        /// JSON run config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Box<Overrides>,
    },
    /// Evaluate a checkpoint and print metrics JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "filtered")]
        mode: EvalMode,
    },
    /// Print dataset statistics as JSON.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Print the cycle decomposition of dates as CSV.
    EncodeTime {
        /// Decompose every timestamp of this dataset.
        #[arg(long, conflicts_with_all = ["from", "to"])]
        dataset: Option<PathBuf>,
        /// First date of an inclusive range (YYYY-MM-DD).
        #[arg(long, requires = "to")]
        from: Option<String>,
        #[arg(long, requires = "from")]
        to: Option<String>,
    },
    /// Export relation-by-time fact counts as CSV.
    Heatmap {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Merge this many consecutive timestamps per column.
        #[arg(long, default_value_t = 1)]
        time_rate: usize,
        /// Split to count; all splits when omitted.
        #[arg(long)]
        split: Option<Split>,
        /// Also write per-timestamp totals here.
        #[arg(long)]
        concentration: Option<PathBuf>,
    },
}

/// Exit codes: 1 configuration, 2 data, 3 numeric failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::Diverged { .. } => 3,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::OutOfVocabulary { .. }
        | Error::InvalidDate(_)
        | Error::AlreadyAugmented { .. }
        | Error::MissingFilterKey { .. }
        | Error::VocabMismatch { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            dataset,
            out,
            overrides,
        } => commands::train(config.as_deref(), dataset, out, &overrides),
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            mode,
        } => commands::evaluate(&checkpoint, &dataset, split, mode),
        Command::Stats { dataset } => commands::stats(&dataset),
        Command::EncodeTime { dataset, from, to } => commands::encode_time(dataset.as_deref(), from.zip(to)),
        Command::Heatmap {
            dataset,
            out,
            time_rate,
            split,
            concentration,
        } => commands::heatmap(&dataset, &out, time_rate, split, concentration.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = match code {
                1 => "config error",
                2 => "data error",
                _ => "numeric failure",
            };
            eprintln!("timelowfer: {kind}: {e}");
            ExitCode::from(code)
        }
    }
}
