//! Benchmark scoring.
//!
//! Answers are matched by letter: the subject's free-form output is reduced to
//! one of A–D by [`extract_answer`] and compared with the item's gold letter.
//! Anything that cannot be reduced to a single letter abstains and scores as
//! wrong.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bench::shuffle;
use crate::exec::{map_ordered, Execution};
use crate::gateway::{ChatRequest, Gateway, ModelRole};
use crate::model::*;
use crate::prompts::mcq_prompt;

pub const ANSWER_MATCHING: &str = "letter";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Visual,
    TextOnly,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "visual" => Ok(EvalMode::Visual),
            "text_only" | "text-only" => Ok(EvalMode::TextOnly),
            other => Err(format!("unknown eval mode `{other}` (expected visual or text_only)")),
        }
    }
}

static TIER_ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i:\banswer)(?:\s+(?i:is)|\s*:)\s*(?i:option\s+)?[\(\[*]*([A-D])\b").expect("regex")
});
static TIER_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*\(?([A-D])[).]").expect("regex"));
static TIER_BARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-D])\b").expect("regex"));

/// Reduces free-form output to a letter, or `None` (abstain).
///
/// Tiers, first match wins: an explicit "answer is X" / "Answer: X"; a line
/// starting with "X)" or "X."; any standalone capital A–D. Two different
/// letters within the deciding tier abstain.
pub fn extract_answer(raw: &str) -> Option<Letter> {
    for tier in [&*TIER_ANSWER, &*TIER_LINE, &*TIER_BARE] {
        let mut found: Option<Letter> = None;
        for cap in tier.captures_iter(raw) {
            let letter = Letter::parse(&cap[1])?;
            match found {
                Some(prev) if prev != letter => return None,
                _ => found = Some(letter),
            }
        }
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Outcome reward: 1.0 iff the extracted letter is the gold letter.
pub fn grpo_reward(item: &QaItem, raw: &str) -> f64 {
    match extract_answer(raw) {
        Some(letter) if letter == item.answer => 1.0,
        _ => 0.0,
    }
}

/// A model under evaluation.
pub trait Subject: Sync {
    fn id(&self) -> String;

    /// Raw output for one item. Errors are recorded and scored as abstain.
    fn respond(&self, item: &QaItem, request: &ChatRequest) -> Result<String, String>;
}

/// Sends the request through the gateway's eval-subject route.
pub struct GatewaySubject<'a>(pub &'a Gateway);

impl Subject for GatewaySubject<'_> {
    fn id(&self) -> String {
        self.0
            .route(ModelRole::EvalSubject)
            .map_or_else(|| "unmapped".into(), |r| format!("{}:{}", r.backend.id(), r.model))
    }

    fn respond(&self, _item: &QaItem, request: &ChatRequest) -> Result<String, String> {
        let req = request
            .clone()
            .with_temperature(self.0.temperature_for(ModelRole::EvalSubject));
        self.0.complete(&req).map(|r| r.content).map_err(|e| e.to_string())
    }
}

/// Always answers with the gold letter.
pub struct OracleSubject;

impl Subject for OracleSubject {
    fn id(&self) -> String {
        "oracle".into()
    }

    fn respond(&self, item: &QaItem, _: &ChatRequest) -> Result<String, String> {
        Ok(format!("Answer: {}", item.answer))
    }
}

/// Always answers the same letter, valid or not.
pub struct FixedLetterSubject(pub char);

impl Subject for FixedLetterSubject {
    fn id(&self) -> String {
        format!("fixed-{}", self.0)
    }

    fn respond(&self, _: &QaItem, _: &ChatRequest) -> Result<String, String> {
        Ok(format!("Answer: {}", self.0))
    }
}

/// Knows the correct option *text* per item id and answers whichever letter
/// currently shows it.
pub struct ContentSubject {
    pub known: BTreeMap<String, String>,
}

impl ContentSubject {
    pub fn from_items(items: &[QaItem]) -> Self {
        let known = items
            .iter()
            .filter_map(|i| i.gold_text().map(|g| (i.id.clone(), g.to_string())))
            .collect();
        Self { known }
    }
}

impl Subject for ContentSubject {
    fn id(&self) -> String {
        "content".into()
    }

    fn respond(&self, item: &QaItem, _: &ChatRequest) -> Result<String, String> {
        let text = self.known.get(&item.id).ok_or("unknown item")?;
        item.options
            .iter()
            .find(|(_, t)| *t == text)
            .map(|(l, _)| format!("The answer is {l}."))
            .ok_or_else(|| "known answer not among options".into())
    }
}

/// Replays canned outputs by item id; unknown ids fail.
pub struct ScriptedSubject {
    pub outputs: BTreeMap<String, String>,
}

impl Subject for ScriptedSubject {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn respond(&self, item: &QaItem, _: &ChatRequest) -> Result<String, String> {
        self.outputs
            .get(&item.id)
            .cloned()
            .ok_or_else(|| format!("no scripted output for `{}`", item.id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub subtask: Subtask,
    pub source: Source,
    pub gold: Letter,
    pub raw_output: String,
    /// `None` is an abstain.
    pub extracted: Option<Letter>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.accuracy = self.correct as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub answer_matching: String,
    pub mode: EvalMode,
    pub subject: String,
    pub seed: u64,
    pub overall: Tally,
    pub abstained: usize,
    pub by_subtask: BTreeMap<Subtask, Tally>,
    pub by_source: BTreeMap<Source, Tally>,
    pub by_subtask_source: BTreeMap<Subtask, BTreeMap<Source, Tally>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub mode: EvalMode,
    pub subject: String,
    pub seed: u64,
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub frames: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Visual,
            frames: DEFAULT_FRAME_COUNT,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Evenly spaced subset of `refs` with at most `n` entries.
pub fn select_frames(refs: &[String], n: usize) -> Vec<String> {
    if refs.len() <= n {
        return refs.to_vec();
    }
    (0..n)
        .map(|i| refs[(2 * i + 1) * refs.len() / (2 * n)].clone())
        .collect()
}

pub fn item_request(item: &QaItem, opts: &EvalOptions) -> ChatRequest {
    let mut message = Message::user(mcq_prompt(item));
    if opts.mode == EvalMode::Visual {
        message = message.with_media(select_frames(&item.media_refs, opts.frames));
    }
    ChatRequest::new(ModelRole::EvalSubject, vec![message])
        .with_temperature(0.0)
        .with_seed(Some(opts.seed))
}

fn eval_item(item: &QaItem, subject: &dyn Subject, opts: &EvalOptions) -> EvalRecord {
    let result = if opts.mode == EvalMode::Visual && item.media_refs.is_empty() {
        Err("visual mode needs media references".to_string())
    } else {
        subject.respond(item, &item_request(item, opts))
    };
    let (raw_output, error) = match result {
        Ok(raw) => (raw, None),
        Err(e) => (String::new(), Some(e)),
    };
    let extracted = extract_answer(&raw_output);
    EvalRecord {
        item_id: item.id.clone(),
        subtask: item.subtask,
        source: item.source,
        gold: item.answer,
        correct: extracted == Some(item.answer),
        extracted,
        raw_output,
        error,
    }
}

/// Runs `subject` over `items` in id order.
pub fn run_eval(items: &[QaItem], subject: &dyn Subject, opts: &EvalOptions) -> (EvalRun, EvalReport) {
    let mut sorted: Vec<&QaItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let records = map_ordered(&sorted, opts.execution, |item| eval_item(item, subject, opts));
    let run = EvalRun {
        mode: opts.mode,
        subject: subject.id(),
        seed: opts.seed,
        records,
    };
    let report = report(&run);
    (run, report)
}

pub fn report(run: &EvalRun) -> EvalReport {
    let mut out = EvalReport {
        answer_matching: ANSWER_MATCHING.into(),
        mode: run.mode,
        subject: run.subject.clone(),
        seed: run.seed,
        overall: Tally::default(),
        abstained: 0,
        by_subtask: BTreeMap::new(),
        by_source: BTreeMap::new(),
        by_subtask_source: BTreeMap::new(),
    };
    for r in &run.records {
        out.overall.add(r.correct);
        out.abstained += usize::from(r.extracted.is_none());
        out.by_subtask.entry(r.subtask).or_default().add(r.correct);
        out.by_source.entry(r.source).or_default().add(r.correct);
        out.by_subtask_source
            .entry(r.subtask)
            .or_default()
            .entry(r.source)
            .or_default()
            .add(r.correct);
    }
    out
}

pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "answer_matching: {}  mode: {:?}  subject: {}  seed: {}",
        report.answer_matching, report.mode, report.subject, report.seed
    );
    let _ = writeln!(
        out,
        "accuracy: {:.3} ({}/{}, {} abstained)",
        report.overall.accuracy, report.overall.correct, report.overall.total, report.abstained
    );
    for (subtask, t) in &report.by_subtask {
        let _ = writeln!(
            out,
            "  {:<14} {:.3} ({}/{})",
            subtask.as_str(),
            t.accuracy,
            t.correct,
            t.total
        );
        for (source, st) in &report.by_subtask_source[subtask] {
            let _ = writeln!(
                out,
                "    {:<12} {:.3} ({}/{})",
                source.display_name(),
                st.accuracy,
                st.correct,
                st.total
            );
        }
    }
    out
}

/// Accuracy of one subject under two option shuffles of the same items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub seed_a: u64,
    pub seed_b: u64,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
}

impl Robustness {
    pub fn is_stable(&self) -> bool {
        self.accuracy_a == self.accuracy_b
    }
}

/// Re-shuffles options with two seeds and scores the subject on both. A
/// subject reasoning about option content is unaffected; one keyed on letter
/// position is not.
pub fn permutation_robustness(
    items: &[QaItem],
    subject: &dyn Subject,
    seed_a: u64,
    seed_b: u64,
    opts: &EvalOptions,
) -> Robustness {
    let score = |seed: u64| {
        let shuffled: Vec<QaItem> = items.iter().map(|i| shuffle::reshuffle(i, seed)).collect();
        run_eval(&shuffled, subject, opts).1.overall.accuracy
    };
    Robustness {
        seed_a,
        seed_b,
        accuracy_a: score(seed_a),
        accuracy_b: score(seed_b),
    }
}
