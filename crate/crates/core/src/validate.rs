//! Invariant checks over the domain types.
//!
//! Validation is total: malformed-but-parseable records yield violations,
//! never panics or errors.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::*;
use crate::text::banned_references;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyField,
    NonPositiveDuration,
    TimestampOrder,
    TimestampOverlap,
    TimestampOutOfRange,
    NoScenes,
    TooFewScenes,
    LabelGap,
    LabelDuplicate,
    LabelNonCanonical,
    SplitIndexMissing,
    SplitIndexUnexpected,
    SplitIndexOutOfRange,
    NotSuitable,
    TargetMismatch,
    BannedReference,
    FrameCountMismatch,
    FrameOrder,
    FrameOutOfRange,
    OptionCount,
    DuplicateOptions,
    AnswerNotInOptions,
    GoldQuestionOverlap,
    VerbatimObservedDistractor,
    MissingSlot,
    QuestionPrefix,
    PermutationInvalid,
    DuplicateId,
    StatsMismatch,
    EmptyConversation,
    LastMessageNotAssistant,
    TargetNotLast,
    MediaLeak,
    EditMissing,
    EditUnexpected,
    EditIdMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("unknown"))
    }
}

/// One broken invariant: which field, which rule, and a human-readable detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: Rule, detail: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.field, self.rule, self.detail)
    }
}

pub trait Validate {
    fn validate(&self) -> Vec<Violation>;

    fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

pub fn rules(violations: &[Violation]) -> BTreeSet<Rule> {
    violations.iter().map(|v| v.rule).collect()
}

fn non_empty(out: &mut Vec<Violation>, field: &str, value: &str) {
    if value.trim().is_empty() {
        out.push(Violation::new(field, Rule::EmptyField, "must not be empty"));
    }
}

impl Validate for VideoRecord {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        non_empty(&mut out, "id", &self.id);
        if !(self.duration_s >= 0.0) || (self.has_media() && self.duration_s <= 0.0) {
            out.push(Violation::new(
                "duration_s",
                Rule::NonPositiveDuration,
                format!("duration {} must be > 0 when media is present", self.duration_s),
            ));
        }
        if let Some(ts) = &self.scene_timestamps {
            for (i, &(start, end)) in ts.iter().enumerate() {
                let field = format!("scene_timestamps[{i}]");
                if !(start < end) {
                    out.push(Violation::new(
                        &field,
                        Rule::TimestampOrder,
                        format!("start {start} >= end {end}"),
                    ));
                }
                if start < 0.0 || end > self.duration_s {
                    out.push(Violation::new(
                        &field,
                        Rule::TimestampOutOfRange,
                        format!("({start}, {end}) outside [0, {}]", self.duration_s),
                    ));
                }
                if i > 0 && start < ts[i - 1].1 {
                    out.push(Violation::new(
                        &field,
                        Rule::TimestampOverlap,
                        format!("starts at {start} before previous end {}", ts[i - 1].1),
                    ));
                }
            }
        }
        out
    }
}

impl Validate for SceneList {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.scenes.is_empty() {
            out.push(Violation::new("scenes", Rule::NoScenes, "scene list is empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, scene) in self.scenes.iter().enumerate() {
            let position = i + 1;
            let field = format!("scenes[{i}].label");
            match parse_scene_label(&scene.label) {
                Some(n) if n == position => {
                    if scene.label != scene_label(n) {
                        out.push(Violation::new(
                            &field,
                            Rule::LabelNonCanonical,
                            format!("`{}` should be `{}`", scene.label, scene_label(n)),
                        ));
                    }
                }
                Some(n) if seen.contains(&n) => out.push(Violation::new(
                    &field,
                    Rule::LabelDuplicate,
                    format!("`{}` repeated at position {position}", scene.label),
                )),
                _ => out.push(Violation::new(
                    &field,
                    Rule::LabelGap,
                    format!(
                        "expected `{}` at position {position}, found `{}`",
                        scene_label(position),
                        scene.label
                    ),
                )),
            }
            if let Some(n) = parse_scene_label(&scene.label) {
                seen.insert(n);
            }
            non_empty(&mut out, &format!("scenes[{i}].description"), &scene.description);
        }
        out
    }
}

impl Validate for SplitDecision {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match (self.suitable, self.split_index) {
            (true, None) => out.push(Violation::new(
                "split_index",
                Rule::SplitIndexMissing,
                "suitable split needs an index",
            )),
            (true, Some(0)) => out.push(Violation::new(
                "split_index",
                Rule::SplitIndexOutOfRange,
                "index must be >= 1",
            )),
            (false, Some(k)) => out.push(Violation::new(
                "split_index",
                Rule::SplitIndexUnexpected,
                format!("unsuitable decision carries index {k}"),
            )),
            _ => {}
        }
        out
    }
}

impl SplitDecision {
    /// Checks the decision against a scene list of length `n`.
    pub fn validate_against(&self, n: usize) -> Vec<Violation> {
        let mut out = self.validate();
        if let Some(k) = self.split_index {
            if k == 0 || k >= n {
                out.push(Violation::new(
                    "split_index",
                    Rule::SplitIndexOutOfRange,
                    format!("index {k} outside 1..={}", n.saturating_sub(1)),
                ));
            }
        }
        out
    }
}

impl Validate for CaptionSplit {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        non_empty(&mut out, "part1", &self.part1);
        non_empty(&mut out, "part2", &self.part2);
        out
    }
}

impl Validate for ReasoningArtifact {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (field, text) in [
            ("rewritten_reasoning", &self.rewritten_reasoning),
            ("rewritten_prediction", &self.rewritten_prediction),
        ] {
            for r in banned_references(text).into_iter().filter(|r| !r.quoted) {
                out.push(Violation::new(
                    field,
                    Rule::BannedReference,
                    format!("`{}` at byte {}", &text[r.range.clone()], r.range.start),
                ));
            }
        }
        out
    }
}

impl Validate for CritiqueVerdict {
    fn validate(&self) -> Vec<Violation> {
        Vec::new()
    }
}

impl Validate for FrameManifest {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.frame_count != self.timestamps_s.len() {
            out.push(Violation::new(
                "frame_count",
                Rule::FrameCountMismatch,
                format!("{} declared, {} timestamps", self.frame_count, self.timestamps_s.len()),
            ));
        }
        let (start, end) = self.interval_s;
        for (i, &t) in self.timestamps_s.iter().enumerate() {
            if !(t >= start && t <= end) {
                out.push(Violation::new(
                    format!("timestamps_s[{i}]"),
                    Rule::FrameOutOfRange,
                    format!("{t} outside [{start}, {end}]"),
                ));
            }
            if i > 0 && !(t > self.timestamps_s[i - 1]) {
                out.push(Violation::new(
                    format!("timestamps_s[{i}]"),
                    Rule::FrameOrder,
                    "timestamps must strictly increase",
                ));
            }
        }
        out
    }
}

impl Validate for NepInstance {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        non_empty(&mut out, "video_id", &self.video_id);
        out.extend(prefixed("scene_list", self.scene_list.validate()));
        if self.scene_list.len() < 2 {
            out.push(Violation::new(
                "scene_list",
                Rule::TooFewScenes,
                "a split needs at least two scenes",
            ));
        }
        if !self.split.suitable {
            out.push(Violation::new(
                "split.suitable",
                Rule::NotSuitable,
                "instances require a suitable split",
            ));
        }
        out.extend(prefixed("split", self.split.validate_against(self.scene_list.len())));
        out.extend(prefixed("caption_split", self.caption_split.validate()));
        if self.target != self.caption_split.part2 {
            out.push(Violation::new(
                "target",
                Rule::TargetMismatch,
                "target must equal caption_split.part2",
            ));
        }
        if let Some(r) = &self.reasoning {
            if !self.flags.contains(&InstanceFlag::RewriteNeedsReview) {
                out.extend(prefixed("reasoning", r.validate()));
            }
        }
        if let Some(ObservedMedia::Frames(m)) = &self.observed_media {
            out.extend(prefixed("observed_media", m.validate()));
            if let Some(t) = self.split_time_s {
                if m.interval_s.1 > t + 1e-9 {
                    out.push(Violation::new(
                        "observed_media.interval_s",
                        Rule::MediaLeak,
                        format!("observed interval ends at {} after split time {t}", m.interval_s.1),
                    ));
                }
            }
        }
        out
    }
}

impl Validate for TuningExample {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match self.messages.last() {
            None => out.push(Violation::new("messages", Rule::EmptyConversation, "no messages")),
            Some(last) => {
                if last.role != Role::Assistant {
                    out.push(Violation::new(
                        "messages",
                        Rule::LastMessageNotAssistant,
                        "last turn must be the assistant",
                    ));
                } else if last.content != self.target {
                    out.push(Violation::new(
                        "target",
                        Rule::TargetNotLast,
                        "target must equal the last assistant turn",
                    ));
                }
            }
        }
        out
    }
}

impl Validate for ReviewDecision {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        non_empty(&mut out, "item_id", &self.item_id);
        match (self.action, &self.edited_item) {
            (ReviewAction::Edit, None) => out.push(Violation::new(
                "edited_item",
                Rule::EditMissing,
                "edit requires an item",
            )),
            (ReviewAction::Edit, Some(item)) if item.id != self.item_id => out.push(Violation::new(
                "edited_item.id",
                Rule::EditIdMismatch,
                format!("`{}` != `{}`", item.id, self.item_id),
            )),
            (ReviewAction::Accept | ReviewAction::Discard, Some(_)) => out.push(Violation::new(
                "edited_item",
                Rule::EditUnexpected,
                "only edits carry an item",
            )),
            _ => {}
        }
        out
    }
}

impl Validate for QaItem {
    fn validate(&self) -> Vec<Violation> {
        crate::bench::validate_item(self, None)
    }
}

fn prefixed(prefix: &str, violations: Vec<Violation>) -> impl Iterator<Item = Violation> + '_ {
    violations.into_iter().map(move |mut v| {
        v.field = format!("{prefix}.{}", v.field);
        v
    })
}
