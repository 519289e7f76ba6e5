//! `pan`: corpus generation, training, embedding, ranking, evaluation and
//! alignment visualization.

mod cmd;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pan", version, about = "Pedestrian alignment network toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    #[value(name = "q", alias = "query")]
    Query,
    #[value(name = "g", alias = "gallery")]
    Gallery,
    #[value(name = "train")]
    Train,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known framing errors.
    Gen {
        /// JSON generator spec; missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the base branch, the alignment stage, or both.
    Train(cmd::train::TrainArgs),
    /// Write per-branch embeddings of one split.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the gallery for every query, optionally with re-ranking.
    Rank(cmd::rank::RankArgs),
    /// Compute CMC and mAP for a rank directory.
    Eval {
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `start:stop:step` fusion weights, e.g. `0:1:0.1`.
        #[arg(long, num_args = 0..=1, default_missing_value = "0:1:0.1")]
        alpha_sweep: Option<String>,
    },
    /// Save original and aligned views side by side.
    Visualize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { spec, out, seed } => cmd::gen::run(spec.as_deref(), &out, seed),
        Command::Train(args) => cmd::train::run(&args),
        Command::Embed {
            ckpt,
            corpus,
            split,
            out,
        } => cmd::embed::run(&ckpt, &corpus, split, &out),
        Command::Rank(args) => cmd::rank::run(&args),
        Command::Eval {
            ranks,
            out,
            alpha_sweep,
        } => cmd::eval::run(&ranks, &out, alpha_sweep.as_deref()),
        Command::Visualize { ckpt, images, out } => cmd::visualize::run(&ckpt, &images, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
