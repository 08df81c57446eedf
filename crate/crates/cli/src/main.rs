//! `trisoup`: train, render, fuse, evaluate and inspect triangle soups.
//!
//! Exit codes: 0 success, 2 invalid command line, 3 invalid input (missing
//! file, parse error, bad config or dataset), 4 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_INPUT: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "trisoup", version, about = "Differentiable triangle-soup radiance fields")]
#[command(after_help = "Environment: TRISOUP_THREADS sets the worker count.\nExit codes: 0 ok, 2 usage, 3 invalid input, 4 runtime failure.")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize a soup against a dataset directory.
    Train(TrainArgs),
    /// Render images, depth and normal maps for every dataset camera.
    Render(RenderArgs),
    /// Fuse rendered depth maps into a filtered point cloud.
    Fuse(FuseArgs),
    /// Compare images (PSNR, SSIM) or point clouds (Chamfer).
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Print soup statistics of a checkpoint.
    Inspect(InspectArgs),
    /// Write a synthetic dataset with known geometry.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (sparse text files plus `images/`).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config file; unspecified keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image resolution scale.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Hold out every k-th view for evaluation (0 = train on all).
    #[arg(long, default_value_t = 8)]
    pub holdout: usize,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory providing the cameras.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Directory written by `render`.
    #[arg(long)]
    pub renders: PathBuf,
    /// Output PLY file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub px_thresh: f64,
    #[arg(long, default_value_t = 3)]
    pub min_views: usize,
    /// Use only the k nearest cameras as neighbors (0 = all).
    #[arg(long, default_value_t = 0)]
    pub neighbors: usize,
    /// Relative depth agreement threshold (0 = off).
    #[arg(long, default_value_t = 0.0)]
    pub rel_depth: f64,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// PSNR and SSIM between same-named images of two directories.
    Images {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the metrics here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chamfer accuracy, completeness and mean between two PLY clouds.
    Cloud {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Also build the edge graph and report connection counts.
    #[arg(long)]
    pub graph: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthScene {
    Quad,
    TwoPlanes,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthScene::Quad)]
    pub scene: SynthScene,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, rec| {
            use std::io::Write;
            writeln!(buf, "level={} {}", rec.level().as_str().to_lowercase(), rec.args())
        })
        .init();
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TRISOUP_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("TRISOUP_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("TRISOUP_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
