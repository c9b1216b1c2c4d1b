//! Multi-hop multiple-choice benchmark generation.
//!
//! A [`QaGenContext`] fixes which scenes a question may reveal. For an
//! `m`-hop extrapolation over `n` scenes the missing chain is scenes
//! `n-m .. n-1`, the final scene `n` is the given anchor, and everything
//! before the chain is observed. Interpolation keeps the pipeline's split `k`:
//! scenes `1..=k` are observed and the question scaffolds five future slots
//! with blanks at positions 2 and 4.

mod check;
pub mod shuffle;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use check::{validate_item, MAX_GOLD_QUESTION_JACCARD, QUESTION_PREFIX, SLOT};
pub use stats::{compute_stats, percent_tenths, render_table, BenchStats};

use crate::exec::{map_ordered, Execution};
use crate::gateway::{Gateway, GatewayError, ModelRole, SchemaId};
use crate::model::*;
use crate::prompts::{qa_template, QA_OUTPUT_STRUCTURE};
use crate::validate::{Rule, Violation};

/// Minimum unobserved scenes for interpolation: three given anchors plus two
/// blanks that are never adjacent to each other.
pub const MIN_INTERPOLATION_GAP: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("{video_id}: {subtask} needs {needed} unobserved scenes, have {have}")]
    Precondition {
        video_id: String,
        subtask: Subtask,
        needed: usize,
        have: usize,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("generator output is not a question: {0}")]
    Shape(String),
    #[error("item `{id}` rejected: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { id: String, violations: Vec<Violation> },
}

/// Everything the question generator may see for one (video, subtask).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaGenContext {
    pub video_id: String,
    pub source: Source,
    pub caption: String,
    pub events: SceneList,
    /// Split index `k`: scenes `1..=k` are what the pipeline observed.
    pub observed: usize,
    pub subtask: Subtask,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub media_refs: Vec<String>,
}

impl QaGenContext {
    pub fn from_instance(inst: &NepInstance, subtask: Subtask) -> Self {
        Self {
            video_id: inst.video_id.clone(),
            source: inst.source,
            caption: inst.caption.clone(),
            events: inst.scene_list.clone(),
            observed: inst.split_index().unwrap_or(0),
            subtask,
            media_refs: inst.observed_refs(),
        }
    }

    fn n(&self) -> usize {
        self.events.len()
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let have = self.n().saturating_sub(self.observed);
        let needed = match self.subtask.hops() {
            Some(m) => m + 1,
            None => MIN_INTERPOLATION_GAP,
        };
        if self.observed == 0 || self.observed > self.n() || have < needed {
            return Err(BenchError::Precondition {
                video_id: self.video_id.clone(),
                subtask: self.subtask,
                needed,
                have,
            });
        }
        Ok(())
    }

    /// Index of the last scene the test model may observe.
    pub fn observed_until(&self) -> usize {
        match self.subtask.hops() {
            Some(m) => self.n().saturating_sub(m + 1),
            None => self.observed,
        }
    }

    pub fn observed_scenes(&self) -> &[Scene] {
        let end = self.observed_until().min(self.n());
        &self.events.scenes[..end]
    }

    pub fn anchors(&self) -> Vec<usize> {
        match self.subtask.hops() {
            Some(_) => vec![self.n()],
            None => vec![self.observed + 1, self.n()],
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            observed_scene_labels: self.events.labels(1..=self.observed_until()),
            anchor_scene_labels: self.anchors().into_iter().map(scene_label).collect(),
        }
    }

    fn scenes_json(scenes: &[Scene]) -> String {
        let list: Vec<Value> = scenes
            .iter()
            .map(|s| json!({"scene": s.label, "description": s.description}))
            .collect();
        serde_json::to_string(&list).expect("json")
    }

    pub fn prompt(&self) -> String {
        let event = Self::scenes_json(&self.events.scenes);
        let obs = Self::scenes_json(self.observed_scenes());
        let last = self.events.scenes.last().map(|s| s.description.as_str()).unwrap_or("");
        qa_template(self.subtask)
            .render(&[
                ("caption", &self.caption),
                ("event", &event),
                ("obs", &obs),
                ("last", last),
                ("output_structure", QA_OUTPUT_STRUCTURE),
            ])
            .expect("question templates bind exactly these placeholders")
    }

    pub fn item_id(&self) -> String {
        format!("{}-{}", self.video_id, self.subtask.short())
    }
}

fn item_from_json(ctx: &QaGenContext, value: &Value) -> Result<QaItem, BenchError> {
    let question = value["Question"]
        .as_str()
        .ok_or_else(|| BenchError::Shape("missing Question".into()))?;
    let answer = value["Answer"]
        .as_str()
        .and_then(Letter::parse)
        .ok_or_else(|| BenchError::Shape(format!("bad Answer {}", value["Answer"])))?;
    let options_obj = value["Options"]
        .as_object()
        .ok_or_else(|| BenchError::Shape("missing Options".into()))?;
    let mut options = BTreeMap::new();
    for (key, text) in options_obj {
        let letter = Letter::parse(key).ok_or_else(|| BenchError::Shape(format!("bad option key `{key}`")))?;
        let text = text
            .as_str()
            .ok_or_else(|| BenchError::Shape(format!("option {key} is not text")))?;
        options.insert(letter, text.trim().to_string());
    }
    Ok(QaItem {
        id: ctx.item_id(),
        video_id: ctx.video_id.clone(),
        source: ctx.source,
        subtask: ctx.subtask,
        question: question.trim().to_string(),
        options,
        answer,
        option_permutation: OptionPermutation::identity(0),
        provenance: ctx.provenance(),
        review_state: ReviewState::Pending,
        explanation: value["Explanation"].as_str().map(str::to_string),
        media_refs: ctx.media_refs.clone(),
    })
}

/// Asks the generator for one question, shuffles its options by `seed` and
/// validates the result.
pub fn generate_item(gw: &Gateway, ctx: &QaGenContext, seed: u64) -> Result<QaItem, BenchError> {
    ctx.check()?;
    let req = gw
        .request(ModelRole::QaGenerator, vec![Message::user(ctx.prompt())])
        .with_seed(Some(seed));
    let reply = gw.complete_json(&req, SchemaId::QaItem)?;
    let mut item = item_from_json(ctx, &reply.value)?;
    let perm = shuffle::permutation_for(&item.id, seed);
    shuffle::apply(&mut item, perm);
    let violations = validate_item(&item, Some(ctx));
    if !violations.is_empty() {
        return Err(BenchError::Invalid {
            id: item.id,
            violations,
        });
    }
    Ok(item)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFailure {
    pub video_id: String,
    pub subtask: Subtask,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct GenOutcome {
    pub items: Vec<QaItem>,
    pub failures: Vec<GenFailure>,
}

/// Generates one item per context, in input order. Failures are collected,
/// never fatal.
pub fn generate_all(gw: &Gateway, contexts: &[QaGenContext], seed: u64, exec: Execution) -> GenOutcome {
    let results = map_ordered(contexts, exec, |ctx| generate_item(gw, ctx, seed));
    let mut out = GenOutcome::default();
    for (ctx, r) in contexts.iter().zip(results) {
        match r {
            Ok(item) => out.items.push(item),
            Err(e) => {
                log::warn!("{}/{}: {e}", ctx.video_id, ctx.subtask);
                out.failures.push(GenFailure {
                    video_id: ctx.video_id.clone(),
                    subtask: ctx.subtask,
                    error: e.to_string(),
                });
            }
        }
    }
    out
}

/// All (instance, subtask) contexts whose preconditions hold.
pub fn contexts_for(instances: &[NepInstance], subtasks: &[Subtask]) -> Vec<QaGenContext> {
    instances
        .iter()
        .flat_map(|inst| subtasks.iter().map(move |s| QaGenContext::from_instance(inst, *s)))
        .filter(|ctx| ctx.check().is_ok())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub items: Vec<QaItem>,
    pub stats: BenchStats,
}

/// Orders items by id, drops duplicate ids (first wins) and, when a target
/// mix is given, keeps at most that many items per subtask.
pub fn assemble_manifest(items: Vec<QaItem>, target_mix: Option<&BTreeMap<Subtask, usize>>) -> BenchmarkManifest {
    let mut by_id: BTreeMap<String, QaItem> = BTreeMap::new();
    for item in items {
        if by_id.contains_key(&item.id) {
            log::warn!("duplicate item id `{}` dropped", item.id);
            continue;
        }
        by_id.insert(item.id.clone(), item);
    }
    let mut taken: BTreeMap<Subtask, usize> = BTreeMap::new();
    let mut kept = Vec::with_capacity(by_id.len());
    for item in by_id.into_values() {
        let count = taken.entry(item.subtask).or_default();
        if let Some(mix) = target_mix {
            if *count >= mix.get(&item.subtask).copied().unwrap_or(0) {
                continue;
            }
        }
        *count += 1;
        kept.push(item);
    }
    if let Some(mix) = target_mix {
        for (subtask, want) in mix {
            let have = taken.get(subtask).copied().unwrap_or(0);
            if have < *want {
                log::warn!("{subtask}: wanted {want} items, only {have} available");
            }
        }
    }
    let stats = compute_stats(&kept);
    BenchmarkManifest { items: kept, stats }
}

/// Unique ids and a stats block equal to a fresh recomputation.
pub fn check_manifest(manifest: &BenchmarkManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for item in &manifest.items {
        if !seen.insert(item.id.as_str()) {
            out.push(Violation::new(
                format!("items.{}", item.id),
                Rule::DuplicateId,
                "id appears twice",
            ));
        }
        for v in validate_item(item, None) {
            out.push(Violation::new(
                format!("items.{}.{}", item.id, v.field),
                v.rule,
                v.detail,
            ));
        }
    }
    if compute_stats(&manifest.items) != manifest.stats {
        out.push(Violation::new(
            "stats",
            Rule::StatsMismatch,
            "stats differ from recomputation",
        ));
    }
    out
}

/// Items with media references stripped; text fields untouched.
pub fn export_text_only(manifest: &BenchmarkManifest) -> Vec<QaItem> {
    manifest
        .items
        .iter()
        .map(|item| QaItem {
            media_refs: Vec::new(),
            ..item.clone()
        })
        .collect()
}

/// Re-attaches media references by item id (inverse of [`export_text_only`]).
pub fn attach_media(items: &[QaItem], refs: &BTreeMap<String, Vec<String>>) -> Vec<QaItem> {
    items
        .iter()
        .map(|item| QaItem {
            media_refs: refs.get(&item.id).cloned().unwrap_or_default(),
            ..item.clone()
        })
        .collect()
}

/// Video ids used both by the benchmark and by the training corpus.
pub fn check_disjoint<'a>(
    bench_video_ids: impl IntoIterator<Item = &'a str>,
    pipeline_video_ids: impl IntoIterator<Item = &'a str>,
) -> Vec<String> {
    let bench: BTreeSet<&str> = bench_video_ids.into_iter().collect();
    let pipeline: BTreeSet<&str> = pipeline_video_ids.into_iter().collect();
    bench.intersection(&pipeline).map(|s| s.to_string()).collect()
}
