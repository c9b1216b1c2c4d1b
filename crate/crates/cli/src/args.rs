use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nepkit::eval::EvalMode;
use nepkit::pipeline::Stage;

#[derive(Debug, Parser)]
#[command(
    name = "nepkit",
    version,
    about = "Next-event-prediction data curation, benchmark and tuning-export toolkit"
)]
pub struct Cli {
    /// TOML config with per-role backend sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for option shuffles, sampling and mixing.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Route every model role to the offline mock backend (no network).
    #[arg(long, global = true)]
    pub mock: bool,

    /// Run batch work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build videos.jsonl from a directory of media files and caption sidecars.
    Ingest(IngestArgs),
    /// Run the NEP pipeline over videos.jsonl.
    Pipeline(PipelineArgs),
    /// Sample observed-part frames (and optionally cut clips) for instances.
    Segment(SegmentArgs),
    /// Generate multiple-choice benchmark items from pipeline instances.
    Genbench(GenbenchArgs),
    /// Print per-subtask and per-source statistics of a benchmark file.
    Stats(StatsArgs),
    /// Serve the review API (and the review UI, if built).
    ReviewServe(ReviewServeArgs),
    /// Write the accepted and edited items of a review store.
    ReviewExport(ReviewExportArgs),
    /// Score a subject model on a benchmark.
    Eval(EvalArgs),
    /// Export SFT, CFT, distillation and mix datasets.
    ExportTuning(ExportTuningArgs),
    /// Export the multiple-choice RL dataset.
    ExportGrpo(ExportGrpoArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding media files, `<stem>.txt` captions and optional
    /// `<stem>.json` metadata (`{"source": .., "duration_s": ..}`).
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value = "videos.jsonl")]
    pub out: PathBuf,
    /// Source for records without metadata.
    #[arg(long, default_value = "other")]
    pub source: String,
    /// Duration probe used when metadata has no duration.
    #[arg(long, default_value = "ffprobe")]
    pub probe_tool: String,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub videos: PathBuf,
    /// Output directory for instances.jsonl and pipeline_report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint directory (default: <out>/checkpoints).
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Frames per observed part (default from config, else 32).
    #[arg(long)]
    pub frames: Option<usize>,
    /// Directory with `<video_id>.timestamps.json` sidecars.
    #[arg(long)]
    pub sidecars: Option<PathBuf>,
    /// Cut physical observed clips into this directory.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    /// Stop after this stage (captioned, events, analyzed, split, reasoned, rewritten).
    #[arg(long, value_parser = parse_stage)]
    pub stop_after: Option<Stage>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown stage `{s}`"))
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub videos: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "frames.jsonl")]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also cut observed clips into this directory.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    /// Record the clip commands without running the media tool.
    #[arg(long)]
    pub manifest_only: bool,
}

#[derive(Debug, Args)]
pub struct GenbenchArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subtasks (1hop, 2hop, 3hop, interp).
    #[arg(long, default_value = "1hop,2hop,3hop,interp")]
    pub subtasks: String,
    /// Per-subtask caps, e.g. `1hop=173,2hop=193`.
    #[arg(long)]
    pub mix: Option<String>,
    /// Training-corpus JSONL (videos or instances); its video ids must not
    /// appear in the benchmark.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub benchmark: PathBuf,
    /// Print the stats block as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    /// Store directory (created and seeded from --benchmark if new).
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long, default_value_t = nepkit_review::http::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Built review UI to serve at `/`.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReviewExportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "benchmark.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "visual", value_parser = parse_mode)]
    pub mode: EvalMode,
    #[arg(long, default_value_t = nepkit::DEFAULT_FRAME_COUNT)]
    pub frames: usize,
    /// `gateway` (the eval_subject role), `oracle`, or `fixed:<letter>`.
    #[arg(long, default_value = "gateway")]
    pub subject: String,
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ExportTuningArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportGrpoArgs {
    /// QA items generated from training-corpus videos.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "grpo.jsonl")]
    pub out: PathBuf,
    #[arg(long, default_value_t = nepkit::tuning::DEFAULT_GRPO_SIZE)]
    pub size: usize,
    /// Benchmark file whose videos must be kept out of the RL data.
    #[arg(long)]
    pub exclude_benchmark: Option<PathBuf>,
}
