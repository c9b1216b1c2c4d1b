//! Per-video stage functions. Each builds its request through a public
//! `*_request` function so fixtures can be keyed by request hash.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::containment::misplaced_scenes;
use super::rewrite::fallback_rewrite;
use crate::gateway::{parse_split_point, ChatRequest, Gateway, GatewayError, ModelRole, SchemaId};
use crate::model::{
    parse_scene_label, scene_label, CaptionSplit, Conclusion, Coverage, CritiqueVerdict, Message, ReasoningArtifact,
    Scene, SceneList, SplitDecision, VideoRecord,
};
use crate::prompts;
use crate::text::banned_references;
use crate::validate::Validate;

/// Why a video produced no instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    InvalidRecord,
    DuplicateId,
    MissingInput,
    MediaUnreadable,
    CaptionFailed,
    EventsJson,
    EventsInvalid,
    Unsplittable,
    AnalysisJson,
    Unsuitable,
    SplitJson,
    EmptyPart,
    ContainmentFailed,
    BackendError,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::InvalidRecord => "invalid_record",
            DropReason::DuplicateId => "duplicate_id",
            DropReason::MissingInput => "missing_input",
            DropReason::MediaUnreadable => "media_unreadable",
            DropReason::CaptionFailed => "caption_failed",
            DropReason::EventsJson => "events_json",
            DropReason::EventsInvalid => "events_invalid",
            DropReason::Unsplittable => "unsplittable",
            DropReason::AnalysisJson => "analysis_json",
            DropReason::Unsuitable => "unsuitable",
            DropReason::SplitJson => "split_json",
            DropReason::EmptyPart => "empty_part",
            DropReason::ContainmentFailed => "containment_failed",
            DropReason::BackendError => "backend_error",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub reason: DropReason,
    pub detail: String,
}

impl Dropped {
    pub fn new(reason: DropReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }

    fn from_gateway(err: GatewayError, json_reason: DropReason) -> Self {
        match err {
            GatewayError::Json { error, .. } => Dropped::new(json_reason, error.to_string()),
            other => Dropped::new(DropReason::BackendError, other.to_string()),
        }
    }
}

impl fmt::Display for Dropped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

fn render(template: prompts::PromptTemplate, bindings: &[(&str, &str)]) -> String {
    template
        .render(bindings)
        .expect("stage templates bind every placeholder")
}

/// `{"events": [...]}` as shown to the analyst and splitter.
pub fn events_json(events: &SceneList) -> String {
    let list: Vec<Value> = events
        .scenes
        .iter()
        .map(|s| json!({"scene": s.label, "description": s.description}))
        .collect();
    serde_json::to_string_pretty(&json!({ "events": list })).expect("json")
}

fn is_remote(uri: &str) -> bool {
    uri.contains("://")
}

/// Media references shown to the captioner: full-video frames when the
/// duration is known, else the media itself.
pub fn caption_media_refs(video: &VideoRecord, frames: usize) -> Vec<String> {
    if video.duration_s > 0.0 {
        if let Ok(m) = crate::segment::sample_frames(video, (0.0, video.duration_s), frames, Coverage::Full) {
            return m.media_refs();
        }
    }
    vec![video.media_uri.clone()]
}

pub fn caption_request(gw: &Gateway, video: &VideoRecord, frames: usize) -> ChatRequest {
    let prompt = prompts::FACT_TRANSLATION.render(&[]).expect("no placeholders");
    gw.request(
        ModelRole::Captioner,
        vec![Message::user(prompt).with_media(caption_media_refs(video, frames))],
    )
}

/// Fact translation. An existing caption passes through without a call.
pub fn translate_facts(gw: &Gateway, video: &VideoRecord, frames: usize) -> Result<String, Dropped> {
    if !video.caption.trim().is_empty() {
        return Ok(video.caption.clone());
    }
    if !video.has_media() {
        return Err(Dropped::new(
            DropReason::MissingInput,
            "record has neither media nor caption",
        ));
    }
    if !is_remote(&video.media_uri) && !std::path::Path::new(&video.media_uri).is_file() {
        return Err(Dropped::new(
            DropReason::MediaUnreadable,
            format!("cannot read media `{}`", video.media_uri),
        ));
    }
    let resp = gw
        .complete(&caption_request(gw, video, frames))
        .map_err(|e| Dropped::new(DropReason::CaptionFailed, e.to_string()))?;
    Ok(resp.content.trim().to_string())
}

pub fn events_request(gw: &Gateway, caption: &str) -> ChatRequest {
    gw.request(
        ModelRole::Analyst,
        vec![Message::user(render(
            prompts::EVENT_IDENTIFICATION,
            &[("video_caption", caption)],
        ))],
    )
}

/// Scenes with canonical labels plus the raw model output.
pub fn identify_events(gw: &Gateway, caption: &str) -> Result<(SceneList, String), Dropped> {
    if caption.trim().is_empty() {
        return Err(Dropped::new(DropReason::MissingInput, "caption is empty"));
    }
    let reply = gw
        .complete_json(&events_request(gw, caption), SchemaId::Events)
        .map_err(|e| Dropped::from_gateway(e, DropReason::EventsJson))?;
    let scenes = reply.value["events"]
        .as_array()
        .expect("schema checked")
        .iter()
        .map(|e| {
            let label = e["scene"].as_str().unwrap_or_default();
            Scene {
                label: parse_scene_label(label).map_or_else(|| label.to_string(), scene_label),
                description: e["description"].as_str().unwrap_or_default().trim().to_string(),
            }
        })
        .collect();
    let events = SceneList { scenes };
    let violations = events.validate();
    if !violations.is_empty() {
        let detail = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Dropped::new(DropReason::EventsInvalid, detail));
    }
    if events.len() < 2 {
        return Err(Dropped::new(
            DropReason::Unsplittable,
            format!("{} scene(s); a split needs at least two", events.len()),
        ));
    }
    Ok((events, reply.response.content))
}

pub fn causal_request(gw: &Gateway, events: &SceneList, caption: &str) -> ChatRequest {
    let ev = events_json(events);
    gw.request(
        ModelRole::Analyst,
        vec![Message::user(render(
            prompts::CAUSAL_ANALYSIS,
            &[("event_identification_result", &ev), ("video_caption", caption)],
        ))],
    )
}

/// Parses and checks the analyst's split decision. A split point that is not
/// two adjacent in-range scenes rejects the decision (the video is unsuitable).
pub fn analyze_causality(gw: &Gateway, events: &SceneList, caption: &str) -> Result<SplitDecision, Dropped> {
    let n = events.len();
    if n < 2 {
        return Err(Dropped::new(DropReason::Unsplittable, "fewer than two scenes"));
    }
    let reply = gw
        .complete_json(&causal_request(gw, events, caption), SchemaId::SplitDecision)
        .map_err(|e| Dropped::from_gateway(e, DropReason::AnalysisJson))?;
    decision_from_json(&reply.value, n)
}

/// Converts a schema-valid `split_decision` object into a checked decision.
pub fn decision_from_json(value: &Value, n: usize) -> Result<SplitDecision, Dropped> {
    let reasoning = value["reasoning"].as_str().unwrap_or_default().to_string();
    let suitable = value["suitable"]
        .as_str()
        .unwrap_or_default()
        .trim()
        .eq_ignore_ascii_case("yes");
    if !suitable {
        return Ok(SplitDecision {
            suitable: false,
            split_index: None,
            reasoning,
        });
    }
    let point = value["optimal_split_point"].as_str().unwrap_or_default();
    let (x, y) = parse_split_point(point)
        .ok_or_else(|| Dropped::new(DropReason::Unsuitable, format!("unparseable split point `{point}`")))?;
    if y != x + 1 {
        return Err(Dropped::new(
            DropReason::Unsuitable,
            format!("split point `{point}` rejected: scenes are not adjacent"),
        ));
    }
    if x == 0 || x >= n {
        return Err(Dropped::new(
            DropReason::Unsuitable,
            format!("split point `{point}` rejected: only {n} scenes"),
        ));
    }
    Ok(SplitDecision {
        suitable: true,
        split_index: Some(x),
        reasoning,
    })
}

pub fn split_request(gw: &Gateway, caption: &str, events: &SceneList, k: usize) -> ChatRequest {
    let ev = events_json(events);
    let point = format!("between {} and {}", scene_label(k), scene_label(k + 1));
    gw.request(
        ModelRole::Splitter,
        vec![Message::user(render(
            prompts::CAPTION_SPLITTING,
            &[
                ("event_identification_result", &ev),
                ("optimal_split_point", &point),
                ("video_caption", caption),
            ],
        ))],
    )
}

fn parts(value: &Value) -> CaptionSplit {
    CaptionSplit {
        part1: value["caption_part1"].as_str().unwrap_or_default().trim().to_string(),
        part2: value["caption_part2"].as_str().unwrap_or_default().trim().to_string(),
    }
}

/// Splits the caption and verifies scene containment, re-prompting once.
pub fn split_caption(
    gw: &Gateway,
    caption: &str,
    events: &SceneList,
    decision: &SplitDecision,
    threshold: f64,
) -> Result<CaptionSplit, Dropped> {
    let k = match (decision.suitable, decision.split_index) {
        (true, Some(k)) => k,
        _ => return Err(Dropped::new(DropReason::Unsuitable, "decision is not a suitable split")),
    };
    let mut req = split_request(gw, caption, events, k);
    let mut reprompted = false;
    loop {
        let reply = gw
            .complete_json(&req, SchemaId::CaptionSplit)
            .map_err(|e| Dropped::from_gateway(e, DropReason::SplitJson))?;
        let split = parts(&reply.value);
        if split.part1.is_empty() || split.part2.is_empty() {
            return Err(Dropped::new(DropReason::EmptyPart, "empty part"));
        }
        let bad = misplaced_scenes(events, k, &split, threshold);
        if bad.is_empty() {
            return Ok(split);
        }
        let listing = bad
            .iter()
            .map(|m| format!("{} belongs in caption_part{}", scene_label(m.scene), m.expected_part))
            .collect::<Vec<_>>()
            .join("; ");
        if reprompted {
            return Err(Dropped::new(DropReason::ContainmentFailed, listing));
        }
        reprompted = true;
        req.messages.push(Message::assistant(reply.response.content));
        req.messages.push(Message::user(format!(
            "Some scenes are in the wrong part: {listing}. Split the caption again so that every scene up to and \
including {} is in caption_part1 and every later scene is in caption_part2, copying the caption text. \
Return only the JSON object.",
            scene_label(k)
        )));
    }
}

pub fn cot_request(gw: &Gateway, part1: &str) -> ChatRequest {
    gw.request(
        ModelRole::Reasoner,
        vec![Message::user(render(
            prompts::COT_PREDICTION,
            &[("caption_part1", part1)],
        ))],
    )
}

/// Separates a `<think>...</think>` block from the answer.
pub fn split_think(content: &str) -> (String, String) {
    if let Some(start) = content.find("<think>") {
        if let Some(end_rel) = content[start..].find("</think>") {
            let end = start + end_rel;
            let thought = content[start + "<think>".len()..end].trim().to_string();
            let answer = content[end + "</think>".len()..].trim().to_string();
            return (thought, answer);
        }
    }
    (String::new(), content.trim().to_string())
}

/// Raw reasoning trace (empty when the backend exposes none) and prediction.
pub fn reason_and_predict(gw: &Gateway, part1: &str) -> Result<ReasoningArtifact, GatewayError> {
    let resp = gw.complete(&cot_request(gw, part1))?;
    let (raw_reasoning, raw_prediction) = match resp.reasoning {
        Some(trace) => (trace.trim().to_string(), split_think(&resp.content).1),
        None => split_think(&resp.content),
    };
    Ok(ReasoningArtifact {
        raw_reasoning,
        raw_prediction,
        ..Default::default()
    })
}

pub fn rewrite_request(gw: &Gateway, text: &str, prediction: bool) -> ChatRequest {
    let prompt = if prediction {
        render(prompts::REWRITE_PREDICTION, &[("prediction_content", text)])
    } else {
        render(prompts::REWRITE_REASONING, &[("reasoning_content", text)])
    };
    gw.request(ModelRole::Rewriter, vec![Message::user(prompt)])
}

fn rewrite_one(gw: &Gateway, text: &str, prediction: bool) -> String {
    if text.trim().is_empty() {
        return String::new();
    }
    let candidate = match gw.complete(&rewrite_request(gw, text, prediction)) {
        Ok(resp) => resp.content.trim().to_string(),
        Err(e) => {
            log::warn!("rewriter failed ({e}); using rule-based rewrite");
            text.to_string()
        }
    };
    if banned_references(&candidate).iter().any(|r| !r.quoted) {
        fallback_rewrite(&candidate)
    } else {
        candidate
    }
}

/// Fills the rewritten fields. The flag is set when a quoted reference remains.
pub fn rewrite_references(gw: &Gateway, artifact: &ReasoningArtifact) -> (ReasoningArtifact, bool) {
    let mut out = artifact.clone();
    out.rewritten_reasoning = rewrite_one(gw, &artifact.raw_reasoning, false);
    out.rewritten_prediction = rewrite_one(gw, &artifact.raw_prediction, true);
    let needs_review = [&out.rewritten_reasoning, &out.rewritten_prediction]
        .iter()
        .any(|t| !banned_references(t).is_empty());
    (out, needs_review)
}

pub fn verify_request(gw: &Gateway, part2: &str, artifact: &ReasoningArtifact) -> ChatRequest {
    gw.request(
        ModelRole::Critic,
        vec![Message::user(render(
            prompts::VERIFICATION,
            &[
                ("caption_part2", part2),
                ("prediction_content", &artifact.rewritten_prediction),
                ("reasoning_content", &artifact.rewritten_reasoning),
            ],
        ))],
    )
}

pub const UNPARSEABLE_CRITIQUE: &str = "unparseable";

/// Critic verdict; the flag is set when the verdict could not be obtained
/// and was recorded conservatively as wrong.
pub fn verify_prediction(gw: &Gateway, part2: &str, artifact: &ReasoningArtifact) -> (CritiqueVerdict, bool) {
    match gw.complete_json(&verify_request(gw, part2, artifact), SchemaId::Verdict) {
        Ok(reply) => (
            CritiqueVerdict {
                critique: reply.value["Critique"].as_str().unwrap_or_default().trim().to_string(),
                conclusion: Conclusion::parse(reply.value["Conclusion"].as_str().unwrap_or_default())
                    .expect("schema checked"),
            },
            false,
        ),
        Err(e) => {
            log::warn!("critic verdict unusable: {e}");
            (
                CritiqueVerdict {
                    critique: UNPARSEABLE_CRITIQUE.into(),
                    conclusion: Conclusion::Wrong,
                },
                true,
            )
        }
    }
}
