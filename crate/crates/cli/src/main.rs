mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Scene-graph matcher: generate corpora, train, match and evaluate.
#[derive(Parser, Debug)]
#[command(name = "sgmatch", version)]
pub struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Print machine-readable JSON instead of plain text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of (A-graph, S-graph, ground truth) samples.
    Generate(GenerateArgs),
    /// Train the encoder on a corpus.
    Train(TrainArgs),
    /// Match an S-graph against an A-graph.
    Match(MatchArgs),
    /// Evaluate a matcher on a corpus split.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file overriding the default corpus specification.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub p_drop_room: Option<f64>,
    #[arg(long)]
    pub p_drop_ws: Option<f64>,
    #[arg(long)]
    pub sigma_centroid: Option<f64>,
    #[arg(long)]
    pub sigma_angle_deg: Option<f64>,
    #[arg(long)]
    pub sigma_length: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory written by `generate`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for weights, history and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    /// Write a weights checkpoint every N epochs (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub a_graph: PathBuf,
    #[arg(long)]
    pub s_graph: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Write the result here (plus a run manifest alongside) instead of
    /// standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MatcherKind {
    /// The trained encoder pipeline.
    Model,
    /// Returns the ground truth; a harness sanity check.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Required for `--matcher model`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatcherKind::Model)]
    pub matcher: MatcherKind,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Directory for report.json, timings.json and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Label used in the results table.
    #[arg(long)]
    pub method: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
