//! The `groundkit` command line: dataset building, refinement, evaluation,
//! statistics and the annotation server.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

pub mod commands;
pub mod config;
pub mod run_manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use groundkit::eval::RecallMode;
use groundkit::MatchMode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<groundkit::Error> for CliError {
    fn from(e: groundkit::Error) -> Self {
        match e {
            groundkit::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "groundkit",
    version,
    about = "Refine, evaluate and curate visual-grounding annotations"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for per-image stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter raw metadata by keyword, clean captions and assign splits.
    BuildDataset(BuildDatasetArgs),
    /// Turn grounding proposals into pseudo-ground-truth regions.
    Refine(RefineArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Count images, regions and phrases.
    Stats(StatsArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Raw metadata, one JSON object per line with image_id, image_path,
    /// title and description.
    #[arg(long)]
    pub raw: PathBuf,
    /// One keyword per line; `#` starts a comment.
    #[arg(long)]
    pub keywords: PathBuf,
    /// Directory that image paths are relative to (used for grouping).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub cleaner: Option<config::CleanerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub val: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub text_threshold: Option<f64>,
    #[arg(long)]
    pub box_threshold: Option<f64>,
    /// Also write the unrefined reading of the proposals.
    #[arg(long)]
    pub raw_baseline: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "match")]
    pub match_mode: Option<MatchMode>,
    #[arg(long)]
    pub fuzzy_threshold: Option<f64>,
    #[arg(long)]
    pub iou_single: Option<f64>,
    #[arg(long, value_parser = parse_recall_mode)]
    pub recall_mode: Option<RecallMode>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_recall_mode(s: &str) -> Result<RecallMode, String> {
    match s {
        "pooled" => Ok(RecallMode::Pooled),
        "per-class" => Ok(RecallMode::PerClass),
        other => Err(format!("unknown recall mode {other:?} (pooled, per-class)")),
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory; without it the table is only printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Store directory (records, edit log, manifest).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// regions.jsonl to ingest at version 0 before serving.
    #[arg(long)]
    pub import: Option<PathBuf>,
    /// manifest.jsonl with image paths and splits.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
