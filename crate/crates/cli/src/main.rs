//! `pctta`: test-time augmentation for point clouds from the command line.
//!
//! Exit codes: 0 success, 64 usage error, 2 runtime failure. Runtime errors
//! print a single machine-parsable line `error: <Code>: <message>` to
//! stderr. `PCTTA_THREADS` caps the worker count (0 or unset = automatic).

mod cmds;

use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(pctta::Error),
}

impl From<pctta::Error> for CliError {
    fn from(e: pctta::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult = Result<(), CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "pctta",
    version,
    about = "Test-time augmentation for 3D point clouds"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write augmented copies of a point cloud plus a provenance record
    Augment(AugmentArgs),
    /// Classify a point cloud, optionally with test-time augmentation
    Classify(ClassifyArgs),
    /// Per-point segmentation labels, optionally with test-time augmentation
    Segment(SegmentArgs),
    /// Evaluate baseline vs TTA over a dataset manifest
    Eval(EvalArgs),
    /// Generate a synthetic sphere/cube/cylinder dataset
    Synth(SynthArgs),
    /// Write a seeded random reference model (for tests and demos)
    GenModel(GenModelArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Jitter,
    Upsample,
    Mesh,
    Copy,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtaArg {
    None,
    Jitter,
    Upsample,
    Mesh,
    Copy,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatArg {
    Xyz,
    #[value(name = "xyz+logit")]
    XyzLogit,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggArg {
    Max,
    Avg,
}

/// Augmentation method parameters shared by several subcommands.
#[derive(Args, Debug, Clone)]
pub struct MethodParams {
    /// Jitter noise scale, in normalized-cloud units
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Upsampling scale factor r (dense target is floor(r*n) points)
    #[arg(long = "scale-r", default_value_t = 4.0)]
    pub scale_r: f64,
    /// Voxel edge for seed sampling (default: bbox diagonal / (3*cbrt(r*n)))
    #[arg(long = "voxel-edge")]
    pub voxel_edge: Option<f64>,
    /// Max center-to-surface distance for seeds (default: one voxel edge)
    #[arg(long = "seed-band")]
    pub seed_band: Option<f64>,
    /// Neighbors for the surface-distance estimate
    #[arg(long = "k-triangle", default_value_t = 3)]
    pub k_triangle: usize,
    /// Neighbors for the local plane fit (default: min(12, max(4, n/25)))
    #[arg(long = "k-plane")]
    pub k_plane: Option<usize>,
    /// Neighboring projections for the outlier bias
    #[arg(long = "k-bias", default_value_t = 8)]
    pub k_bias: usize,
    /// Bias threshold multiplier for outlier removal
    #[arg(long = "outlier-factor", default_value_t = 1.5)]
    pub outlier_factor: f64,
    /// Drop the original points from the dense upsampled set
    #[arg(long = "exclude-original")]
    pub exclude_original: bool,
    /// Mesh file (required by the mesh method)
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Augmentation method
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Input point cloud (xyz or ply)
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    /// Output directory
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Number of augmented clouds
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output size: `same` keeps the input count, `scale` uses floor(r*n)
    #[arg(long, value_parser = ["same", "scale"], default_value = "scale")]
    pub target: String,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Input point cloud
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    /// Model weights file
    #[arg(long)]
    pub model: PathBuf,
    /// Augmentation method (none = baseline only)
    #[arg(long, value_enum, default_value_t = TtaArg::None)]
    pub tta: TtaArg,
    /// Number of augmented clouds
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Input point cloud
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    /// Model weights file (must include a segmentation head)
    #[arg(long)]
    pub model: PathBuf,
    /// Output label file (one label per line)
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Augmentation method
    #[arg(long, value_enum, default_value_t = TtaArg::Upsample)]
    pub tta: TtaArg,
    /// Number of augmented clouds (0 = baseline)
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Correspondence feature space
    #[arg(long, value_enum, default_value_t = FeatArg::Xyz)]
    pub feat: FeatArg,
    /// Aggregation over collected logit rows
    #[arg(long, value_enum, default_value_t = AggArg::Max)]
    pub agg: AggArg,
    /// Neighbors per augmented cloud
    #[arg(short = 'k', long = "k", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    /// Scale of the logit block in correspondence features
    #[arg(long = "logit-weight", default_value_t = 1.0)]
    pub logit_weight: f64,
    /// Average softmax probabilities instead of raw logits (avg mode)
    #[arg(long = "softmax-avg")]
    pub softmax_avg: bool,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model weights file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fit a centroid classifier on the first N entries per class
    #[arg(long = "centroid-train")]
    pub centroid_train: Option<usize>,
    /// Histogram bins for the centroid classifier
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    /// Augmentation method (none = TTA degenerates to the baseline)
    #[arg(long, value_enum, default_value_t = TtaArg::Upsample)]
    pub tta: TtaArg,
    /// Number of augmented clouds
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated point densities to sweep (FPS subsampling)
    #[arg(long = "density-sweep", value_delimiter = ',')]
    pub density_sweep: Option<Vec<usize>>,
    /// Correspondence feature space (segmentation manifests only)
    #[arg(long, value_enum)]
    pub feat: Option<FeatArg>,
    /// Aggregation mode (segmentation manifests only)
    #[arg(long, value_enum)]
    pub agg: Option<AggArg>,
    /// Neighbors per augmented cloud (segmentation manifests only)
    #[arg(short = 'k', long = "k", value_parser = clap::value_parser!(u32).range(1..))]
    pub k: Option<u32>,
    /// Logit block scale (segmentation manifests only)
    #[arg(long = "logit-weight")]
    pub logit_weight: Option<f64>,
    /// Average softmax probabilities (segmentation manifests only)
    #[arg(long = "softmax-avg")]
    pub softmax_avg: bool,
    /// Report output path (stdout when omitted)
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Comma-separated classes (subset of sphere, cube, cylinder)
    #[arg(long, value_delimiter = ',', default_value = "sphere,cube,cylinder")]
    pub classes: Vec<String>,
    /// Clouds per class
    #[arg(long = "per-class", default_value_t = 60)]
    pub per_class: usize,
    /// Points per cloud
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    /// Gaussian surface noise
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Master RNG seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Manifest task
    #[arg(long, value_parser = ["classification", "part_segmentation"], default_value = "classification")]
    pub task: String,
}

#[derive(Args, Debug)]
pub struct GenModelArgs {
    /// Output weights file
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Number of classes
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// RNG seed for the weights
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[cfg(feature = "parallel")]
fn init_thread_pool() -> Result<(), String> {
    if let Ok(value) = std::env::var("PCTTA_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("PCTTA_THREADS must be a nonnegative integer, got '{value}'"))?;
        if n > 0 {
            // Ignore "already initialized": tests may set the pool first.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_thread_pool() -> Result<(), String> {
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(msg) = init_thread_pool() {
        eprintln!("error: Usage: {msg}");
        exit(64);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let result = match cli.cmd {
        Cmd::Augment(args) => cmds::augment(args),
        Cmd::Classify(args) => cmds::classify(args),
        Cmd::Segment(args) => cmds::segment(args),
        Cmd::Eval(args) => cmds::eval(args),
        Cmd::Synth(args) => cmds::synth(args),
        Cmd::GenModel(args) => cmds::gen_model(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: Usage: {msg}");
            exit(64);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {}: {e}", e.code());
            exit(2);
        }
    }
}
