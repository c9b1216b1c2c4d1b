//! Four-stage NEP instance construction: fact translation, analysis
//! (events + causal split decision), segmentation, and reasoning/critique.
//!
//! [`run_pipeline`] drives every video through the stage functions in
//! [`stages`], checkpointing after each stage so an interrupted run resumes
//! where it stopped. Output order is by video id regardless of scheduling.

pub mod checkpoint;
pub mod containment;
pub mod rewrite;
pub mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use checkpoint::{CheckpointError, CheckpointStore, Stage, StageCheckpoint, VideoProgress};
pub use stages::{DropReason, Dropped};

use crate::exec::{map_ordered, Execution};
use crate::gateway::Gateway;
use crate::model::{Coverage, InstanceFlag, NepInstance, ObservedMedia, VideoRecord, DEFAULT_FRAME_COUNT};
use crate::segment::{self, ClipCutter, ClipOutcome};
use crate::validate::Validate;

pub const DEFAULT_CONTAINMENT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub containment_threshold: f64,
    pub frames: usize,
    pub execution: Execution,
    /// Directory with `<video_id>.timestamps.json` overrides.
    pub sidecar_dir: Option<PathBuf>,
    /// Cut physical observed clips into this directory.
    pub clips: Option<(ClipCutter, PathBuf)>,
    /// Stop every video after this stage (simulates an interrupted run).
    pub stop_after: Option<Stage>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            containment_threshold: DEFAULT_CONTAINMENT_THRESHOLD,
            frames: DEFAULT_FRAME_COUNT,
            execution: Execution::default(),
            sidecar_dir: None,
            clips: None,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub video_id: String,
    pub reason: DropReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub videos_total: usize,
    pub instances: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub flagged: BTreeMap<InstanceFlag, usize>,
    pub verdicts: BTreeMap<String, usize>,
    /// Videos stopped early by `stop_after`; non-zero only for partial runs.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub incomplete: usize,
    pub drops: Vec<DropEntry>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub instances: Vec<NepInstance>,
    pub report: PipelineReport,
}

enum Outcome {
    Instance(Box<NepInstance>),
    Dropped(Dropped),
    Incomplete,
}

struct Runner<'a> {
    gw: &'a Gateway,
    opts: &'a PipelineOptions,
    store: &'a CheckpointStore,
}

impl Runner<'_> {
    fn checkpoint(&self, video: &VideoRecord, stage: Option<Stage>, progress: &VideoProgress) {
        if let Err(e) = self
            .store
            .save(&StageCheckpoint::new(&video.id, stage, progress.clone()))
        {
            log::warn!("{}: checkpoint not saved: {e}", video.id);
        }
    }

    fn run_video(&self, video: &VideoRecord) -> Outcome {
        let (mut stage, mut p) = match self.store.load(&video.id) {
            Some(cp) => (cp.stage, cp.progress),
            None => (None, VideoProgress::default()),
        };
        if let Some(d) = &p.dropped {
            return Outcome::Dropped(d.clone());
        }
        loop {
            if stage == Some(Stage::Verified) {
                return Outcome::Instance(Box::new(assemble(video, &p)));
            }
            if stage.is_some() && stage == self.opts.stop_after {
                return Outcome::Incomplete;
            }
            let next = match stage {
                None => Stage::Captioned,
                Some(s) => Stage::ALL[Stage::ALL.iter().position(|x| *x == s).expect("known stage") + 1],
            };
            if let Err(d) = self.advance(video, next, &mut p) {
                log::info!("{}: dropped at {next:?}: {d}", video.id);
                p.dropped = Some(d.clone());
                self.checkpoint(video, stage, &p);
                return Outcome::Dropped(d);
            }
            stage = Some(next);
            self.checkpoint(video, stage, &p);
        }
    }

    fn advance(&self, video: &VideoRecord, stage: Stage, p: &mut VideoProgress) -> Result<(), Dropped> {
        let gw = self.gw;
        match stage {
            Stage::Captioned => {
                p.caption = Some(stages::translate_facts(gw, video, self.opts.frames)?);
            }
            Stage::Events => {
                let (events, raw) = stages::identify_events(gw, p.caption.as_deref().unwrap_or_default())?;
                p.raw.insert("events".into(), raw);
                p.events = Some(events);
            }
            Stage::Analyzed => {
                let events = p.events.as_ref().expect("events stage done");
                let decision = stages::analyze_causality(gw, events, p.caption.as_deref().unwrap_or_default())?;
                if !decision.suitable {
                    return Err(Dropped::new(DropReason::Unsuitable, decision.reasoning));
                }
                p.decision = Some(decision);
            }
            Stage::Split => {
                let events = p.events.as_ref().expect("events stage done");
                let decision = p.decision.as_ref().expect("analysis done");
                let split = stages::split_caption(
                    gw,
                    p.caption.as_deref().unwrap_or_default(),
                    events,
                    decision,
                    self.opts.containment_threshold,
                )?;
                p.split = Some(split);
                self.observe(video, p);
            }
            Stage::Reasoned => {
                let part1 = &p.split.as_ref().expect("split done").part1;
                match stages::reason_and_predict(gw, part1) {
                    Ok(a) => p.reasoning = Some(a),
                    Err(e) => {
                        log::warn!("{}: no reasoning ({e}); sft only", video.id);
                        p.flags.insert(InstanceFlag::SftOnly);
                    }
                }
            }
            Stage::Rewritten => {
                if let Some(a) = &p.reasoning {
                    let (rewritten, needs_review) = stages::rewrite_references(gw, a);
                    if needs_review {
                        p.flags.insert(InstanceFlag::RewriteNeedsReview);
                    }
                    p.reasoning = Some(rewritten);
                }
            }
            Stage::Verified => {
                if let Some(a) = &p.reasoning {
                    let part2 = &p.split.as_ref().expect("split done").part2;
                    let (verdict, unparseable) = stages::verify_prediction(gw, part2, a);
                    if unparseable {
                        p.flags.insert(InstanceFlag::VerdictUnparseable);
                    }
                    p.verdict = Some(verdict);
                }
            }
        }
        Ok(())
    }

    /// Observed media for the past segment: frames over `[0, split_time]`,
    /// or a cut clip when configured. Videos without timing get none.
    fn observe(&self, video: &VideoRecord, p: &mut VideoProgress) {
        let events = p.events.as_ref().expect("events");
        let k = p.decision.as_ref().and_then(|d| d.split_index).expect("suitable");
        let mut timed = video.clone();
        if let Some(dir) = &self.opts.sidecar_dir {
            match segment::load_sidecar_timestamps(dir, &video.id) {
                Ok(Some(ts)) => timed.scene_timestamps = Some(ts),
                Ok(None) => {}
                Err(e) => log::warn!("{}: {e}", video.id),
            }
        }
        if !timed.has_media() || (timed.duration_s <= 0.0 && timed.scene_timestamps.is_none()) {
            return;
        }
        let t = match segment::locate_split_time(&timed, events, k) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: no split time: {e}", video.id);
                return;
            }
        };
        p.split_time_s = Some(t);
        if let Some((cutter, dir)) = &self.opts.clips {
            let out = dir.join(format!("{}.observed.mp4", video.id));
            match cutter.cut_clip(&timed, (0.0, t), &out) {
                Ok(ClipOutcome::Written(path)) => {
                    p.observed_media = Some(ObservedMedia::Clip {
                        path: path.display().to_string(),
                        start_s: 0.0,
                        end_s: t,
                    });
                    return;
                }
                Ok(ClipOutcome::Skipped { command }) => log::info!("manifest-only, skipped: {}", command.join(" ")),
                Err(e) => log::warn!("{}: clip not cut ({e}); using frame manifest", video.id),
            }
        }
        match segment::sample_frames(&timed, (0.0, t), self.opts.frames, Coverage::ObservedPart) {
            Ok(m) => p.observed_media = Some(ObservedMedia::Frames(m)),
            Err(e) => log::warn!("{}: no frames: {e}", video.id),
        }
    }
}

fn assemble(video: &VideoRecord, p: &VideoProgress) -> NepInstance {
    let split = p.split.clone().expect("split done");
    NepInstance {
        video_id: video.id.clone(),
        source: video.source,
        caption: p.caption.clone().unwrap_or_default(),
        scene_list: p.events.clone().expect("events done"),
        split: p.decision.clone().expect("analysis done"),
        target: split.part2.clone(),
        caption_split: split,
        split_time_s: p.split_time_s,
        observed_media: p.observed_media.clone(),
        reasoning: p.reasoning.clone(),
        verdict: p.verdict.clone(),
        flags: p.flags.clone(),
    }
}

fn record_drop(report: &mut PipelineReport, video_id: &str, d: Dropped) {
    *report.dropped.entry(d.reason).or_default() += 1;
    report.drops.push(DropEntry {
        video_id: video_id.to_string(),
        reason: d.reason,
        detail: d.detail,
    });
}

/// Runs every video through the pipeline.
pub fn run_pipeline(
    gw: &Gateway,
    videos: &[VideoRecord],
    opts: &PipelineOptions,
    store: &CheckpointStore,
) -> PipelineRun {
    let mut report = PipelineReport {
        videos_total: videos.len(),
        ..Default::default()
    };

    let mut seen = BTreeSet::new();
    let mut runnable = Vec::new();
    for v in videos {
        if !seen.insert(v.id.clone()) {
            record_drop(
                &mut report,
                &v.id,
                Dropped::new(DropReason::DuplicateId, "video id repeated in corpus"),
            );
            continue;
        }
        let violations = v.validate();
        if !violations.is_empty() {
            let detail = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            record_drop(&mut report, &v.id, Dropped::new(DropReason::InvalidRecord, detail));
            continue;
        }
        runnable.push(v.clone());
    }
    runnable.sort_by(|a, b| a.id.cmp(&b.id));

    let runner = Runner { gw, opts, store };
    let outcomes = map_ordered(&runnable, opts.execution, |v| runner.run_video(v));

    let mut instances = Vec::new();
    for (video, outcome) in runnable.iter().zip(outcomes) {
        match outcome {
            Outcome::Instance(inst) => {
                for f in &inst.flags {
                    *report.flagged.entry(*f).or_default() += 1;
                }
                if let Some(v) = &inst.verdict {
                    *report.verdicts.entry(v.conclusion.as_str().to_string()).or_default() += 1;
                }
                instances.push(*inst);
            }
            Outcome::Dropped(d) => record_drop(&mut report, &video.id, d),
            Outcome::Incomplete => report.incomplete += 1,
        }
    }
    report
        .drops
        .sort_by(|a, b| a.video_id.cmp(&b.video_id).then(a.reason.cmp(&b.reason)));
    report.instances = instances.len();
    PipelineRun { instances, report }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] crate::jsonl::JsonlError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const REPORT_FILE: &str = "pipeline_report.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Reads `corpus`, runs the pipeline with checkpoints under `checkpoints`,
/// and writes `instances.jsonl` and `pipeline_report.json` into `out_dir`.
pub fn run_pipeline_files(
    gw: &Gateway,
    corpus: &Path,
    out_dir: &Path,
    checkpoints: Option<&Path>,
    opts: &PipelineOptions,
) -> Result<PipelineRun, PipelineError> {
    let videos: Vec<VideoRecord> = crate::jsonl::read(corpus)?;
    let cp_dir = checkpoints.map_or_else(|| out_dir.join(CHECKPOINT_DIR), Path::to_path_buf);
    let store = CheckpointStore::open(cp_dir)?;
    let run = run_pipeline(gw, &videos, opts, &store);
    crate::jsonl::write(out_dir.join(INSTANCES_FILE), &run.instances)?;
    crate::jsonl::write_json(out_dir.join(REPORT_FILE), &run.report)?;
    Ok(run)
}
