//! `kilnkit`: one binary over the whole toolkit — the raster detection
//! chain, graph construction, model training and inference, evaluators,
//! synthetic-data generators, and the gradient checker.
//!
//! Every subcommand is a thin wrapper over one library operation, reads an
//! optional shared JSON config (flags win over file values), and is
//! deterministic: identical inputs, config, and seed give byte-identical
//! primary outputs regardless of worker count.

mod config;
mod detect_cmd;
mod eval_cmds;
mod graph_cmd;
mod model_cmds;
mod synth_cmd;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Failure classes mapped onto process exit codes: usage/config errors exit
/// 1, completed-but-partial runs exit 2, numerical failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Partial(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Partial(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Partial(m) | CliError::Numerical(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "kilnkit",
    version,
    about = "Brick-kiln detection toolkit: spectral-temporal raster detection, \
             direction-aware graph classification, evaluation, and synthetic data",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detection chain over a directory of tile time series
    Detect(DetectArgs),
    /// Build a nearest-neighbor spatial graph from a POI CSV
    GraphBuild(GraphBuildArgs),
    /// Train a node classifier on a labeled spatial graph
    Train(TrainArgs),
    /// Apply a trained checkpoint to a graph
    Predict(PredictArgs),
    /// Score node predictions against graph labels
    EvalNodes(EvalNodesArgs),
    /// Score detection boxes against ground-truth boxes
    EvalDetections(EvalDetectionsArgs),
    /// Generate seeded synthetic inputs
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Compare analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct DetectArgs {
    /// Directory whose subdirectories each hold one frame's PNG tiles + sidecars
    #[arg(long)]
    pub input: PathBuf,
    /// Height grid (KGRD); providing one enables the height filter
    #[arg(long)]
    pub heights: Option<PathBuf>,
    /// Shared JSON config; the `detect` section applies [default: built-in defaults]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output GeoJSON of detected regions
    #[arg(long)]
    pub out: PathBuf,
    /// Run-report JSON path [default: <out stem>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads for tile-parallel stages [default: logical cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Temporal composite percentile [default: 80]
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Local-maximum window side, odd [default: 9]
    #[arg(long)]
    pub window: Option<usize>,
    /// Threshold histogram bin count [default: 256]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Closing structuring-element radius [default: 4]
    #[arg(long)]
    pub se_radius: Option<u32>,
    /// Where the threshold pools: scene or tile [default: scene]
    #[arg(long)]
    pub threshold_scope: Option<String>,
}

#[derive(Args)]
pub struct GraphBuildArgs {
    /// POI CSV with lon/lat columns
    #[arg(long)]
    pub pois: PathBuf,
    /// Output graph JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Shared JSON config; the `graph` section applies
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Neighbors per node [default: 8]
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated feature column names [default: none]
    #[arg(long)]
    pub features: Option<String>,
    /// Label column name [default: none]
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled graph JSON
    #[arg(long)]
    pub graph: PathBuf,
    /// Checkpoint output path (first replicate when --replicates > 1)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch metrics CSV output path
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Shared JSON config; the `train` section applies
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model kind: climategraph, uniform_attention, or isotropic_mean [default: climategraph]
    #[arg(long)]
    pub model: Option<String>,
    /// RNG seed for init and splits [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs [default: 300]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Hidden width per layer [default: 32]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Message-passing layers [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Directional-kernel harmonics [default: 4]
    #[arg(long)]
    pub harmonics: Option<usize>,
    /// Class weighting: uniform or inverse_frequency [default: inverse_frequency]
    #[arg(long)]
    pub class_weights: Option<String>,
    /// Seeded replicates; prints mean +/- std test macro-F1 [default: 1]
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Graph JSON to classify
    #[arg(long)]
    pub graph: PathBuf,
    /// Trained checkpoint JSON
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output predictions JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalNodesArgs {
    /// Graph JSON carrying true labels
    #[arg(long)]
    pub graph: PathBuf,
    /// Predictions JSON from `predict`
    #[arg(long)]
    pub pred: PathBuf,
    /// Optional JSON report output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalDetectionsArgs {
    /// Predicted boxes GeoJSON
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth boxes GeoJSON
    #[arg(long)]
    pub truth: PathBuf,
    /// Shared JSON config; the `eval` section applies
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Matching IoU threshold [default: 0.3]
    #[arg(long)]
    pub iou: Option<f64>,
    /// Optional JSON report output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum SynthCommand {
    /// Generate a raster scene: frame directories of tiles, heights, truth
    Raster(SynthRasterArgs),
    /// Generate a spatial graph with seeded labels
    Graph(SynthGraphArgs),
}

#[derive(Args)]
pub struct SynthRasterArgs {
    /// Output directory for frames, heights.kgrd, and truth.geojson
    #[arg(long)]
    pub out: PathBuf,
    /// Shared JSON config; the `synth` section applies
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene width in pixels [default: 512]
    #[arg(long)]
    pub width: Option<u32>,
    /// Scene height in pixels [default: 512]
    #[arg(long)]
    pub height: Option<u32>,
    /// Temporal frames [default: 5]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Planted kilns [default: 12]
    #[arg(long)]
    pub kilns: Option<usize>,
    /// Kiln disk radius in pixels [default: 8]
    #[arg(long)]
    pub radius: Option<u32>,
    /// Per-frame kiln activity probability [default: 0.6]
    #[arg(long)]
    pub activity: Option<f64>,
    /// Tall distractor roofs [default: 0]
    #[arg(long)]
    pub distractors: Option<usize>,
}

#[derive(Args)]
pub struct SynthGraphArgs {
    /// Output graph JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Shared JSON config; the `synth` section applies
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Node count [default: 1000]
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Neighbors per node [default: 8]
    #[arg(long)]
    pub k: Option<usize>,
    /// Anisotropy axis in degrees, 0 = east [default: 0]
    #[arg(long)]
    pub axis: Option<f64>,
    /// Label rule: bearing_majority or feature_separable [default: bearing_majority]
    #[arg(long)]
    pub rule: Option<String>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Seed for the 12-node check graph and parameter init [default: 0]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step [default: 1e-5]
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect(args) => detect_cmd::run(args),
        Command::GraphBuild(args) => graph_cmd::run(args),
        Command::Train(args) => model_cmds::train(args),
        Command::Predict(args) => model_cmds::predict(args),
        Command::EvalNodes(args) => eval_cmds::eval_nodes(args),
        Command::EvalDetections(args) => eval_cmds::eval_detections(args),
        Command::Synth(SynthCommand::Raster(args)) => synth_cmd::raster(args),
        Command::Synth(SynthCommand::Graph(args)) => synth_cmd::graph(args),
        Command::Gradcheck(args) => model_cmds::gradcheck(args),
    }
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("kilnkit: {}", e.message());
                e.exit_code()
            }
        },
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            0
        }
        Err(e) => {
            eprint!("{e}");
            1
        }
    };
    std::process::exit(code);
}
