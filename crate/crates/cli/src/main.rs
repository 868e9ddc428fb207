//! `partlift`: zero-shot part segmentation of colored point clouds.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 backend failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use partlift::labeling::VoteMode;
use partlift::multiview::{DEFAULT_RESOLUTION, DEFAULT_VIEW_COUNT};
use partlift::scenes::{ColorScheme, Template};

#[derive(Debug, Parser)]
#[command(name = "partlift", version, about = "Zero-shot 3D part segmentation of colored point clouds")]
struct Cli {
    /// Worker threads for rendering, self-extension and detection (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic object with its ground-truth sidecar.
    Gen(GenArgs),
    /// Export per-view PNG renders and index maps of the normalized cloud.
    Render(RenderArgs),
    /// Unlabeled part segmentation.
    Segment(SegmentArgs),
    /// Assign part names to a parts file.
    Label(LabelArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Segment and label in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value = "mug")]
    template: Template,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = partlift::scenes::DEFAULT_SCENE_POINTS)]
    points: usize,
    /// Euler angles in degrees, e.g. `30,0,-45`.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    rotate: Option<Vec<f64>>,
    /// per-class or mono.
    #[arg(long, default_value = "per-class")]
    colors: ColorScheme,
    /// Write ASCII instead of binary little-endian PLY.
    #[arg(long)]
    ascii: bool,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar path (default: `<out stem>.gt.json`).
    #[arg(long)]
    gt_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ViewArgs {
    #[arg(long, default_value_t = DEFAULT_VIEW_COUNT)]
    views: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Viewpoint ids to export (default: all).
    #[arg(long = "view")]
    view_ids: Vec<u32>,
    #[command(flatten)]
    views: ViewArgs,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// oracle, noisy[:key=value,...] or remote:<url>.
    #[arg(long, default_value = "oracle")]
    backend: commands::BackendSpec,
    /// Ground-truth sidecar, required by the oracle and noisy backends.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Seed for every random choice, including noisy backends without an explicit seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat views whose backend call fails as empty instead of aborting.
    #[arg(long)]
    skip_failed_views: bool,
}

#[derive(Debug, Args)]
struct SegmentOpts {
    #[arg(long, default_value_t = partlift::extension::DEFAULT_FPS_COUNT)]
    fps_count: usize,
    #[arg(long, default_value_t = partlift::extension::DEFAULT_SVE_FPS_COUNT)]
    sve_fps_count: usize,
    /// Merge threshold.
    #[arg(short = 'T', long = "merge-threshold", default_value_t = partlift::merging::DEFAULT_MERGE_THRESHOLD)]
    merge_threshold: f64,
    /// Skip self-extension: groups come from start views only.
    #[arg(long)]
    no_extend: bool,
}

#[derive(Debug, Args)]
struct LabelOpts {
    /// Comma-separated part names, e.g. `lid,handle,spout`.
    #[arg(long)]
    prompt: Option<String>,
    /// Label from raw votes without the non-highest vote penalty.
    #[arg(long)]
    no_cnvp: bool,
    /// both, 2d or 3d.
    #[arg(long, default_value = "both")]
    vote_mode: VoteMode,
    /// Dump the vote matrix as CSV.
    #[arg(long)]
    votes_csv: Option<PathBuf>,
    /// Dump the decision matrix as CSV.
    #[arg(long)]
    decision_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    segment: SegmentOpts,
    #[command(flatten)]
    views: ViewArgs,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    input: PathBuf,
    /// Parts file from `segment`.
    #[arg(long)]
    parts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    label: LabelOpts,
    #[command(flatten)]
    views: ViewArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Labeled parts output.
    #[arg(long)]
    out: PathBuf,
    /// Also write the unlabeled parts.
    #[arg(long)]
    parts_out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    segment: SegmentOpts,
    #[command(flatten)]
    label: LabelOpts,
    #[command(flatten)]
    views: ViewArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Parts files, paired in order with `--gt`.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    gt: Vec<PathBuf>,
    /// Print the report as JSON instead of tables.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Render(a) => commands::render(a),
        Command::Segment(a) => commands::segment(a),
        Command::Label(a) => commands::label(a),
        Command::Eval(a) => commands::eval(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
