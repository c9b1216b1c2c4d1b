//! Shared domain types.
//!
//! All types are plain immutable values with a snake_case JSON encoding; the
//! JSONL corpora (`videos.jsonl`, `instances.jsonl`, `benchmark.jsonl`,
//! `decisions.jsonl`) hold one of these per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Where a source video came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Youtube,
    Activitynet,
    Youcook2,
    Nextqa,
    Charades,
    Other,
}

impl Source {
    pub const ALL: [Source; 6] = [
        Source::Youtube,
        Source::Activitynet,
        Source::Youcook2,
        Source::Nextqa,
        Source::Charades,
        Source::Other,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Source::Youtube => "YouTube",
            Source::Activitynet => "ActivityNet",
            Source::Youcook2 => "YouCook2",
            Source::Nextqa => "NextQA",
            Source::Charades => "Charades",
            Source::Other => "Other",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Youtube => "youtube",
            Source::Activitynet => "activitynet",
            Source::Youcook2 => "youcook2",
            Source::Nextqa => "nextqa",
            Source::Charades => "charades",
            Source::Other => "other",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == lower)
            .ok_or_else(|| format!("unknown source `{s}`"))
    }
}

/// A raw source video: media location, caption and optional scene timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub source: Source,
    #[serde(default)]
    pub media_uri: String,
    #[serde(default)]
    pub duration_s: f64,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_timestamps: Option<Vec<(f64, f64)>>,
}

impl VideoRecord {
    pub fn has_media(&self) -> bool {
        !self.media_uri.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub label: String,
    pub description: String,
}

/// Ordered scenes of a caption, labelled `Scene 1` .. `Scene n`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SceneList {
    pub scenes: Vec<Scene>,
}

impl SceneList {
    /// Builds a canonical list from descriptions, labelling them in order.
    pub fn from_descriptions<I, S>(descriptions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let scenes = descriptions
            .into_iter()
            .enumerate()
            .map(|(i, d)| Scene {
                label: scene_label(i + 1),
                description: d.into(),
            })
            .collect();
        Self { scenes }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Scene by 1-based index.
    pub fn scene(&self, index: usize) -> Option<&Scene> {
        index.checked_sub(1).and_then(|i| self.scenes.get(i))
    }

    pub fn labels(&self, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
        range.map(scene_label).collect()
    }
}

/// Canonical label for a 1-based scene index.
pub fn scene_label(index: usize) -> String {
    format!("Scene {index}")
}

/// Parses `scene 3`, `SCENE 3`, ` Scene 3 ` into 3.
pub fn parse_scene_label(label: &str) -> Option<usize> {
    let trimmed = label.trim();
    let (word, rest) = trimmed.split_at(trimmed.find(char::is_whitespace)?);
    if !word.eq_ignore_ascii_case("scene") {
        return None;
    }
    rest.trim().parse().ok()
}

/// Where to cut a scene list: between scene `k` and scene `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub suitable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_index: Option<usize>,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSplit {
    pub part1: String,
    pub part2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReasoningArtifact {
    pub raw_reasoning: String,
    pub raw_prediction: String,
    #[serde(default)]
    pub rewritten_reasoning: String,
    #[serde(default)]
    pub rewritten_prediction: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    Right,
    Wrong,
}

impl Conclusion {
    /// Accepts exactly `right` / `wrong`, ignoring case and surrounding space.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("right") {
            Some(Conclusion::Right)
        } else if s.eq_ignore_ascii_case("wrong") {
            Some(Conclusion::Wrong)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Conclusion::Right => "right",
            Conclusion::Wrong => "wrong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueVerdict {
    pub critique: String,
    pub conclusion: Conclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    ObservedPart,
    Full,
}

/// Timestamps of frames sampled from one interval of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub video_id: String,
    #[serde(default)]
    pub media_uri: String,
    pub frame_count: usize,
    pub timestamps_s: Vec<f64>,
    pub interval_s: (f64, f64),
    pub covers: Coverage,
}

pub const DEFAULT_FRAME_COUNT: usize = 32;

impl FrameManifest {
    /// Media-fragment references (`uri#t=12.500`), one per frame.
    pub fn media_refs(&self) -> Vec<String> {
        self.timestamps_s
            .iter()
            .map(|t| frame_ref(&self.media_uri, *t))
            .collect()
    }
}

pub fn frame_ref(media_uri: &str, t: f64) -> String {
    format!("{media_uri}#t={t:.3}")
}

/// The observed (past) part of a video, either as sampled frames or a cut clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservedMedia {
    Frames(FrameManifest),
    Clip { path: String, start_s: f64, end_s: f64 },
}

impl ObservedMedia {
    pub fn media_refs(&self) -> Vec<String> {
        match self {
            ObservedMedia::Frames(m) => m.media_refs(),
            ObservedMedia::Clip { path, .. } => vec![path.clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFlag {
    /// Reasoning could not be obtained; only usable for plain SFT.
    SftOnly,
    /// A banned reference survived the rewrite inside a quoted span.
    RewriteNeedsReview,
    /// The critic output could not be parsed; conclusion forced to wrong.
    VerdictUnparseable,
}

/// One past/future split of a video with its future-description target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NepInstance {
    pub video_id: String,
    pub source: Source,
    pub caption: String,
    pub scene_list: SceneList,
    pub split: SplitDecision,
    pub caption_split: CaptionSplit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_media: Option<ObservedMedia>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningArtifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CritiqueVerdict>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<InstanceFlag>,
}

impl NepInstance {
    pub fn split_index(&self) -> Option<usize> {
        self.split.split_index
    }

    pub fn observed_refs(&self) -> Vec<String> {
        self.observed_media
            .as_ref()
            .map(ObservedMedia::media_refs)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtask {
    #[serde(rename = "extrap_1hop")]
    Extrap1Hop,
    #[serde(rename = "extrap_2hop")]
    Extrap2Hop,
    #[serde(rename = "extrap_3hop")]
    Extrap3Hop,
    #[serde(rename = "interpolation")]
    Interpolation,
}

impl Subtask {
    pub const ALL: [Subtask; 4] = [
        Subtask::Extrap1Hop,
        Subtask::Extrap2Hop,
        Subtask::Extrap3Hop,
        Subtask::Interpolation,
    ];

    /// Number of missing events for extrapolation subtasks.
    pub fn hops(self) -> Option<usize> {
        match self {
            Subtask::Extrap1Hop => Some(1),
            Subtask::Extrap2Hop => Some(2),
            Subtask::Extrap3Hop => Some(3),
            Subtask::Interpolation => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subtask::Extrap1Hop => "extrap_1hop",
            Subtask::Extrap2Hop => "extrap_2hop",
            Subtask::Extrap3Hop => "extrap_3hop",
            Subtask::Interpolation => "interpolation",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Subtask::Extrap1Hop => "1hop",
            Subtask::Extrap2Hop => "2hop",
            Subtask::Extrap3Hop => "3hop",
            Subtask::Interpolation => "interp",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Subtask::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.short() == s)
            .ok_or_else(|| format!("unknown subtask `{s}`"))
    }
}

/// Multiple-choice option letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Letter> {
        Letter::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn parse(s: &str) -> Option<Letter> {
        match s.trim() {
            "A" => Some(Letter::A),
            "B" => Some(Letter::B),
            "C" => Some(Letter::C),
            "D" => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Letter::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid letter `{s}`")))
    }
}

/// Records how options were reordered: `order[i]` is the generator's
/// original letter now shown at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionPermutation {
    pub seed: u64,
    pub order: Vec<Letter>,
}

impl OptionPermutation {
    pub fn identity(seed: u64) -> Self {
        Self {
            seed,
            order: Letter::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub observed_scene_labels: Vec<String>,
    pub anchor_scene_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    #[default]
    Pending,
    Accepted,
    Edited,
    Discarded,
}

impl ReviewState {
    pub const ALL: [ReviewState; 4] = [
        ReviewState::Pending,
        ReviewState::Accepted,
        ReviewState::Edited,
        ReviewState::Discarded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewState::Pending => "pending",
            ReviewState::Accepted => "accepted",
            ReviewState::Edited => "edited",
            ReviewState::Discarded => "discarded",
        }
    }
}

impl FromStr for ReviewState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReviewState::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| format!("unknown review state `{s}`"))
    }
}

/// One multiple-choice benchmark question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub video_id: String,
    pub source: Source,
    pub subtask: Subtask,
    pub question: String,
    pub options: BTreeMap<Letter, String>,
    pub answer: Letter,
    pub option_permutation: OptionPermutation,
    pub provenance: Provenance,
    #[serde(default)]
    pub review_state: ReviewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub media_refs: Vec<String>,
}

impl QaItem {
    pub fn gold_text(&self) -> Option<&str> {
        self.options.get(&self.answer).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat turn; shared by LLM requests and exported tuning conversations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_refs: Option<Vec<String>>,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            media_refs: None,
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            media_refs: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            media_refs: None,
        }
    }

    pub fn with_media(mut self, refs: Vec<String>) -> Self {
        self.media_refs = if refs.is_empty() { None } else { Some(refs) };
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sft,
    Cft,
    Distill,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sft, Strategy::Cft, Strategy::Distill];
}

/// One conversation for supervised tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningExample {
    pub strategy: Strategy,
    pub video_id: String,
    pub messages: Vec<Message>,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    Accept,
    Edit,
    Discard,
}

/// A reviewer's action on one benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub item_id: String,
    pub action: ReviewAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_item: Option<QaItem>,
    pub reviewer: String,
    pub at: DateTime<Utc>,
}
