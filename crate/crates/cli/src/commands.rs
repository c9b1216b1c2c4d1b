use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use nepkit::bench::{self, QaGenContext};
use nepkit::config::Config;
use nepkit::eval::{self, EvalOptions, Subject};
use nepkit::gateway::{Gateway, ModelRole};
use nepkit::jsonl;
use nepkit::pipeline::{self, PipelineOptions};
use nepkit::segment::{self, ClipCutter, ClipOutcome};
use nepkit::tuning;
use nepkit::*;
use nepkit_review::ReviewStore;
use serde::Serialize;

use crate::args::*;
use crate::{config_err, validation_err};

struct Ctx {
    config: Config,
    seed: u64,
    mock: bool,
    execution: Execution,
}

impl Ctx {
    fn gateway(&self, needed: &[ModelRole]) -> Result<Gateway> {
        let gw = self.config.build_gateway(self.mock)?;
        let missing: Vec<&str> = needed
            .iter()
            .filter(|r| gw.route(**r).is_none())
            .map(|r| r.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(config_err(format!(
                "no backend configured for role(s) {}; add [roles.<name>] sections or pass --mock",
                missing.join(", ")
            )));
        }
        if self.mock {
            debug_assert!(!gw.is_networked());
        }
        Ok(gw)
    }

    fn frames(&self, flag: Option<usize>) -> Result<usize> {
        let n = flag.unwrap_or(self.config.pipeline.frames);
        if n == 0 {
            return Err(config_err("--frames must be at least 1"));
        }
        Ok(n)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        config.pipeline.execution
    };
    let ctx = Ctx {
        config,
        seed: cli.seed,
        mock: cli.mock,
        execution,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Pipeline(a) => run_pipeline(&ctx, a),
        Command::Segment(a) => segment_cmd(&ctx, a),
        Command::Genbench(a) => genbench(&ctx, a),
        Command::Stats(a) => stats(a),
        Command::ReviewServe(a) => review_serve(a),
        Command::ReviewExport(a) => review_export(a),
        Command::Eval(a) => run_eval(&ctx, a),
        Command::ExportTuning(a) => export_tuning(&ctx, a),
        Command::ExportGrpo(a) => export_grpo(&ctx, a),
    }
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).map_err(|e| validation_err(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let source: Source = a.source.parse().map_err(config_err)?;
    let (records, problems) = crate::ingest::scan(&a.dir, source, &a.probe_tool)?;
    jsonl::write(&a.out, &records)?;
    println!("{} record(s) written to {}", records.len(), a.out.display());
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("invalid: {p}");
        }
        return Err(validation_err(format!("{} invalid record(s) skipped", problems.len())));
    }
    Ok(())
}

const PIPELINE_ROLES: [ModelRole; 5] = [
    ModelRole::Analyst,
    ModelRole::Splitter,
    ModelRole::Reasoner,
    ModelRole::Rewriter,
    ModelRole::Critic,
];

fn run_pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    let videos: Vec<VideoRecord> = read(&a.videos)?;
    let mut roles = PIPELINE_ROLES.to_vec();
    if videos.iter().any(|v| v.caption.trim().is_empty()) {
        roles.push(ModelRole::Captioner);
    }
    let gw = ctx.gateway(&roles)?;
    let cfg = &ctx.config.pipeline;
    if !(0.0..=1.0).contains(&cfg.containment_threshold) {
        return Err(config_err("pipeline.containment_threshold must be within [0, 1]"));
    }
    let opts = PipelineOptions {
        containment_threshold: cfg.containment_threshold,
        frames: ctx.frames(a.frames)?,
        execution: ctx.execution,
        sidecar_dir: a.sidecars.clone(),
        clips: a.clips.clone().map(|dir| {
            (
                ClipCutter {
                    tool: cfg.clip_tool.clone(),
                    manifest_only: cfg.manifest_only,
                },
                dir,
            )
        }),
        stop_after: a.stop_after,
    };
    std::fs::create_dir_all(&a.out)?;
    let store = pipeline::CheckpointStore::open(
        a.checkpoints
            .clone()
            .unwrap_or_else(|| a.out.join(pipeline::CHECKPOINT_DIR)),
    )?;
    let run = pipeline::run_pipeline(&gw, &videos, &opts, &store);
    jsonl::write(a.out.join(pipeline::INSTANCES_FILE), &run.instances)?;
    jsonl::write_json(a.out.join(pipeline::REPORT_FILE), &run.report)?;
    println!(
        "{} video(s): {} instance(s), {} dropped{}",
        run.report.videos_total,
        run.report.instances,
        run.report.drops.len(),
        if run.report.incomplete > 0 {
            format!(", {} incomplete", run.report.incomplete)
        } else {
            String::new()
        }
    );
    for (reason, n) in &run.report.dropped {
        println!("  dropped {reason}: {n}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentRecord {
    video_id: String,
    split_time_s: f64,
    observed: FrameManifest,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_command: Option<Vec<String>>,
}

fn segment_cmd(ctx: &Ctx, a: &SegmentArgs) -> Result<()> {
    let videos: BTreeMap<String, VideoRecord> = read::<VideoRecord>(&a.videos)?
        .into_iter()
        .map(|v| (v.id.clone(), v))
        .collect();
    let instances: Vec<NepInstance> = read(&a.instances)?;
    let frames = ctx.frames(a.frames)?;
    let cutter = ClipCutter {
        tool: ctx.config.pipeline.clip_tool.clone(),
        manifest_only: a.manifest_only || ctx.config.pipeline.manifest_only,
    };
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for inst in &instances {
        let Some(video) = videos.get(&inst.video_id) else {
            problems.push(format!("{}: not in {}", inst.video_id, a.videos.display()));
            continue;
        };
        let Some(k) = inst.split_index() else {
            problems.push(format!("{}: no split index", inst.video_id));
            continue;
        };
        let result = segment::locate_split_time(video, &inst.scene_list, k)
            .and_then(|t| segment::sample_frames(video, (0.0, t), frames, Coverage::ObservedPart).map(|m| (t, m)));
        let (t, manifest) = match result {
            Ok(x) => x,
            Err(e) => {
                problems.push(format!("{}: {e}", inst.video_id));
                continue;
            }
        };
        let mut record = SegmentRecord {
            video_id: inst.video_id.clone(),
            split_time_s: t,
            observed: manifest,
            clip: None,
            clip_command: None,
        };
        if let Some(dir) = &a.clips {
            let path = dir.join(format!("{}.observed.mp4", inst.video_id));
            match cutter.cut_clip(video, (0.0, t), &path)? {
                ClipOutcome::Written(p) => record.clip = Some(p.display().to_string()),
                ClipOutcome::Skipped { command } => record.clip_command = Some(command),
            }
        }
        out.push(record);
    }
    jsonl::write(&a.out, &out)?;
    println!("{} frame manifest(s) written to {}", out.len(), a.out.display());
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("skipped: {p}");
        }
        return Err(validation_err(format!(
            "{} instance(s) could not be segmented",
            problems.len()
        )));
    }
    Ok(())
}

fn parse_subtasks(s: &str) -> Result<Vec<Subtask>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse().map_err(config_err))
        .collect()
}

fn parse_mix(s: &str) -> Result<BTreeMap<Subtask, usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (name, n) = part
                .split_once('=')
                .ok_or_else(|| config_err(format!("mix entry `{part}` is not <subtask>=<count>")))?;
            let subtask: Subtask = name.parse().map_err(config_err)?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| config_err(format!("bad count in `{part}`")))?;
            Ok((subtask, n))
        })
        .collect()
}

/// Video ids of a JSONL file holding either videos or instances.
fn video_ids(path: &Path) -> Result<BTreeSet<String>> {
    let rows: Vec<serde_json::Value> = read(path)?;
    Ok(rows
        .iter()
        .filter_map(|r| r.get("video_id").or_else(|| r.get("id")).and_then(|v| v.as_str()))
        .map(str::to_string)
        .collect())
}

pub const BENCHMARK_FILE: &str = "benchmark.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const TEXT_ONLY_FILE: &str = "text_only.jsonl";
pub const FAILURES_FILE: &str = "genbench_failures.jsonl";

fn genbench(ctx: &Ctx, a: &GenbenchArgs) -> Result<()> {
    let subtasks = parse_subtasks(&a.subtasks)?;
    let mix = a.mix.as_deref().map(parse_mix).transpose()?;
    let instances: Vec<NepInstance> = read(&a.instances)?;
    if let Some(exclude) = &a.exclude {
        let train = video_ids(exclude)?;
        let overlap = bench::check_disjoint(
            instances.iter().map(|i| i.video_id.as_str()),
            train.iter().map(String::as_str),
        );
        if !overlap.is_empty() {
            return Err(validation_err(format!(
                "benchmark and training videos overlap: {}",
                overlap.join(", ")
            )));
        }
    }
    let gw = ctx.gateway(&[ModelRole::QaGenerator])?;
    let contexts: Vec<QaGenContext> = bench::contexts_for(&instances, &subtasks);
    let outcome = bench::generate_all(&gw, &contexts, ctx.seed, ctx.execution);
    let manifest = bench::assemble_manifest(outcome.items, mix.as_ref());
    std::fs::create_dir_all(&a.out)?;
    jsonl::write(a.out.join(BENCHMARK_FILE), &manifest.items)?;
    jsonl::write_json(a.out.join(STATS_FILE), &manifest.stats)?;
    jsonl::write(a.out.join(TEXT_ONLY_FILE), &bench::export_text_only(&manifest))?;
    jsonl::write(a.out.join(FAILURES_FILE), &outcome.failures)?;
    print!("{}", bench::render_table(&manifest.stats));
    if !outcome.failures.is_empty() {
        println!("{} context(s) failed; see {}", outcome.failures.len(), FAILURES_FILE);
    }
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let items: Vec<QaItem> = read(&a.benchmark)?;
    let stats = bench::compute_stats(&items);
    if a.json {
        print_json(&stats)
    } else {
        print!("{}", bench::render_table(&stats));
        Ok(())
    }
}

fn open_store(dir: &Path, seed_from: Option<&Path>) -> Result<ReviewStore> {
    let items: Vec<QaItem> = match seed_from {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    if seed_from.is_none() && !dir.join(nepkit_review::store::ITEMS_FILE).is_file() {
        return Err(config_err(format!(
            "{} is not a review store; pass --benchmark to create one",
            dir.display()
        )));
    }
    Ok(ReviewStore::open_or_init(dir, &items)?)
}

fn review_serve(a: &ReviewServeArgs) -> Result<()> {
    let store = Arc::new(open_store(&a.store, a.benchmark.as_deref())?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| config_err(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        println!("review service on http://{}", listener.local_addr()?);
        nepkit_review::http::serve(listener, store, a.static_dir.clone()).await?;
        Ok(())
    })
}

fn review_export(a: &ReviewExportArgs) -> Result<()> {
    let store = open_store(&a.store, None)?;
    let items = store.export_accepted();
    jsonl::write(&a.out, &items)?;
    println!("{} item(s) written to {}", items.len(), a.out.display());
    Ok(())
}

fn subject<'a>(spec: &str, gw: Option<&'a Gateway>) -> Result<Box<dyn Subject + 'a>> {
    match spec {
        "gateway" => Ok(Box::new(eval::GatewaySubject(
            gw.expect("gateway built for gateway subject"),
        ))),
        "oracle" => Ok(Box::new(eval::OracleSubject)),
        s => match s.strip_prefix("fixed:").and_then(|l| l.chars().next()) {
            Some(c) => Ok(Box::new(eval::FixedLetterSubject(c))),
            None => Err(config_err(format!(
                "unknown subject `{s}` (gateway, oracle or fixed:<letter>)"
            ))),
        },
    }
}

fn run_eval(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    if a.frames == 0 {
        return Err(config_err("--frames must be at least 1"));
    }
    let items: Vec<QaItem> = read(&a.benchmark)?;
    let gw = if a.subject == "gateway" {
        Some(ctx.gateway(&[ModelRole::EvalSubject])?)
    } else {
        None
    };
    let subject = subject(&a.subject, gw.as_ref())?;
    let opts = EvalOptions {
        mode: a.mode,
        frames: a.frames,
        seed: ctx.seed,
        execution: ctx.execution,
    };
    let (run, report) = eval::run_eval(&items, subject.as_ref(), &opts);
    std::fs::create_dir_all(&a.out)?;
    jsonl::write(a.out.join("eval_run.jsonl"), &run.records)?;
    jsonl::write_json(a.out.join("report.json"), &report)?;
    let table = eval::render_report(&report);
    std::fs::write(a.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct TuningReport {
    prompt_version: &'static str,
    counts: BTreeMap<&'static str, usize>,
    skipped: BTreeMap<&'static str, BTreeMap<tuning::SkipReason, usize>>,
    mix_warnings: Vec<String>,
    leaks: usize,
}

fn export_tuning(ctx: &Ctx, a: &ExportTuningArgs) -> Result<()> {
    let instances: Vec<NepInstance> = read(&a.instances)?;
    let by_id: BTreeMap<&str, &NepInstance> = instances.iter().map(|i| (i.video_id.as_str(), i)).collect();
    std::fs::create_dir_all(&a.out)?;
    let mut report = TuningReport {
        prompt_version: nepkit::prompts::TUNING_PROMPT_VERSION,
        counts: BTreeMap::new(),
        skipped: BTreeMap::new(),
        mix_warnings: Vec::new(),
        leaks: 0,
    };
    let mut all = Vec::new();
    for (strategy, name) in [
        (Strategy::Sft, "sft"),
        (Strategy::Cft, "cft"),
        (Strategy::Distill, "distill"),
    ] {
        let export = tuning::export(&instances, strategy);
        jsonl::write(a.out.join(format!("{name}.jsonl")), &export.examples)?;
        report.counts.insert(name, export.examples.len());
        report.skipped.insert(name, export.skipped);
        all.extend(export.examples);
    }
    let mix = tuning::mix_schedule(&instances, ctx.seed);
    jsonl::write(a.out.join("mix.jsonl"), &mix.examples)?;
    report.counts.insert("mix", mix.examples.len());
    report.mix_warnings = mix.warnings;
    all.extend(mix.examples);

    let mut problems = Vec::new();
    for ex in &all {
        for v in ex.validate() {
            problems.push(format!("{}/{:?}: {v}", ex.video_id, ex.strategy));
        }
        let leaked = tuning::leaked_refs(ex, by_id[ex.video_id.as_str()]);
        report.leaks += leaked.len();
        for r in leaked {
            problems.push(format!("{}/{:?}: future media `{r}`", ex.video_id, ex.strategy));
        }
    }
    jsonl::write_json(a.out.join("export_report.json"), &report)?;
    print_json(&report)?;
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        return Err(validation_err(format!(
            "{} exported example(s) failed checks",
            problems.len()
        )));
    }
    Ok(())
}

fn export_grpo(ctx: &Ctx, a: &ExportGrpoArgs) -> Result<()> {
    let pool: Vec<QaItem> = read(&a.pool)?;
    let excluded = match &a.exclude_benchmark {
        Some(p) => read::<QaItem>(p)?.into_iter().map(|i| i.video_id).collect(),
        None => BTreeSet::new(),
    };
    let data = tuning::to_grpo_dataset(&pool, a.size, ctx.seed, &excluded);
    jsonl::write(&a.out, &data.records)?;
    println!("{} record(s) written to {}", data.records.len(), a.out.display());
    for w in &data.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
