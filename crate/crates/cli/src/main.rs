//! `refpose`: scene synthesis, depth metrics and losses, matching, pose
//! solving and pose evaluation over BOP-style scene directories.
//!
//! Records go to stdout (or `--out`) as JSON lines sorted by pair; the human
//! summary goes to stderr. Exit codes: 0 success, 2 input error, 3 numerical
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use refpose_core::io::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "refpose", version, about = "Single-reference pose estimation toolkit")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the solver and generator seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic query/reference scene directory.
    Synth(SynthArgs),
    /// Depth metrics of a predicted depth PNG against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Every depth-loss term of a prediction.
    Losses(LossesArgs),
    /// Coarse-to-fine matches for every pair of a scene directory.
    Match(MatchArgs),
    /// Relative and query poses for every pair.
    SolvePose(SolvePoseArgs),
    /// Pose errors and recalls against ground truth.
    EvalPose(EvalPoseArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pairs: Option<usize>,
    /// Rotation gap in degrees about the camera x, y, z axes.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gap: Option<Vec<f64>>,
    /// Depth noise standard deviation, meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Fraction of depth pixels replaced by outliers.
    #[arg(long)]
    outliers: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalDepthArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Stored units per meter; defaults to the configured depth scale.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LossesArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    rgb: PathBuf,
    /// Intrinsics as fx,fy,cx,cy.
    #[arg(long, value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of precomputed feature containers, named by image id.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolvePoseArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Match file from `match`; only its pairs are solved. Without it the
    /// pairs are matched first.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long, conflicts_with = "matches")]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalPoseArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Pose file from `solve-pose`; pairs absent from it count as failed.
    #[arg(long, required_unless_present = "oracle")]
    poses: Option<PathBuf>,
    /// Score the ground-truth query poses themselves.
    #[arg(long, conflicts_with = "poses")]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig, commands::Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), commands::Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, cfg),
        Command::EvalDepth(a) => commands::eval_depth(a, &cfg),
        Command::Losses(a) => commands::losses(a, &cfg),
        Command::Match(a) => commands::match_pairs(a, &cfg),
        Command::SolvePose(a) => commands::solve_pose(a, &cfg),
        Command::EvalPose(a) => commands::eval_pose(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REFPOSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
