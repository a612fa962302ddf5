//! `geomatch`: candidate generation, features, heuristic sweeps, prompting and
//! synthetic benchmarks for linestring matching.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geomatch_core::geo_io::CrsMode;
use geomatch_core::geometry::AngleMode;
use geomatch_core::synth::TaskKind;
use geomatch_core::Task;
use geomatch_llm::backend::BackendError;
use geomatch_llm::inference::FailurePolicy;
use geomatch_llm::prompt::{PromptMode, Shots};

use crate::config::{BackendKind, InitialKind};

#[derive(Debug, Parser)]
#[command(name = "geomatch", version, about = "Match sidewalks to roads and deduplicate linestrings")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate candidate pairs from GeoJSON layers.
    #[command(subcommand)]
    Candidates(CandidatesCmd),
    /// Compute the three geometric features for every pair.
    Features(FeaturesArgs),
    /// Shuffle and split a labeled pair file into train, val and test.
    Split(SplitArgs),
    /// Score every heuristic spec on a labeled training set.
    Sweep(SweepArgs),
    /// Label pairs with one heuristic spec.
    Classify(ClassifyArgs),
    /// Label pairs with a chat model.
    Prompt(PromptArgs),
    /// Review and refine initial answers with a chat model.
    Refine(RefineArgs),
    /// Synthetic spatial-reasoning tasks and planted pair datasets.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Score a prediction file against gold labels.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum CandidatesCmd {
    /// Sidewalks within a buffer of a road.
    Join(JoinArgs),
    /// Linestrings from two layers that share a point.
    Union(UnionArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonOut {
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    #[arg(long)]
    pub roads: PathBuf,
    #[arg(long)]
    pub sidewalks: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub buffer_m: Option<f64>,
    /// Comma-separated highway values to keep.
    #[arg(long, value_delimiter = ',')]
    pub road_types: Option<Vec<String>>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct UnionArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Gold labels as JSON lines of {left_id, right_id, label}.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[arg(long)]
    pub overlap_buffer_m: Option<f64>,
    #[arg(long)]
    pub angle_mode: Option<AngleMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Directory receiving train.jsonl, val.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub val: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Spec such as `p:5,c:2`.
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    pub spec: Option<String>,
    /// Use the best spec of this sweep report.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Predictions as JSON lines of {pair_id, label}.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Mock reply script.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<PromptMode>,
    #[arg(long)]
    pub shots: Option<Shots>,
    /// Labeled, featured pool for few-shot exemplars.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    #[arg(long)]
    pub in_flight: Option<usize>,
    #[arg(long)]
    pub policy: Option<FailurePolicy>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Exchange log, one JSON line per request.
    #[arg(long)]
    pub exchanges: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// random, best, worst or spec.
    #[arg(long)]
    pub initial: Option<InitialKind>,
    /// Sweep report supplying the best or worst spec.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refine records, one JSON line per pair.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    /// Generate seeded instances of one task kind.
    Gen(SynthGenArgs),
    /// Grade answers against instance truths.
    Grade(SynthGradeArgs),
    /// Generate pairs labeled by a planted heuristic rule.
    Planted(SynthPlantedArgs),
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub task: TaskKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Leave the truth out of the written instances.
    #[arg(long)]
    pub blind: bool,
}

#[derive(Debug, Args)]
pub struct SynthGradeArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub answers: PathBuf,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct SynthPlantedArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "p:5,c:2")]
    pub rule: String,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub positive_rate: f64,
    /// Planar pair file with labels and features.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also write roads.geojson, sidewalks.geojson and labels.jsonl here.
    #[arg(long)]
    pub geojson_dir: Option<PathBuf>,
    #[arg(long, default_value_t = -122.2)]
    pub origin_lon: f64,
    #[arg(long, default_value_t = 47.6)]
    pub origin_lat: f64,
    #[arg(long, default_value_t = 300.0)]
    pub spacing_m: f64,
    #[command(flatten)]
    pub common: CommonOut,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold-labeled pair file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// JSON lines with pair_id and label (or final_label); null counts as a parse failure.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub policy: Option<FailurePolicy>,
    #[arg(long)]
    pub crs: Option<CrsMode>,
    #[command(flatten)]
    pub common: CommonOut,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<BackendError>().is_some()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
