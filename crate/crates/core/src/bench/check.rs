use std::collections::BTreeSet;

use super::QaGenContext;
use crate::model::{Letter, QaItem};
use crate::text::{content_tokens, jaccard, normalize_for_compare};
use crate::validate::{Rule, Violation};

/// Gold/question token-Jaccard above this is lexical leakage.
pub const MAX_GOLD_QUESTION_JACCARD: f64 = 0.5;
pub const QUESTION_PREFIX: &str = "Based on the given video";
pub const SLOT: &str = "[?]";

/// Structural and quality checks for one item. The verbatim-distractor rule
/// needs the generation context and is skipped without one.
pub fn validate_item(item: &QaItem, ctx: Option<&QaGenContext>) -> Vec<Violation> {
    let mut out = Vec::new();
    if item.id.trim().is_empty() {
        out.push(Violation::new("id", Rule::EmptyField, "must not be empty"));
    }
    if item.options.len() != 4 {
        out.push(Violation::new(
            "options",
            Rule::OptionCount,
            format!("{} options; exactly 4 required", item.options.len()),
        ));
    }
    let mut seen: Vec<(Letter, String)> = Vec::new();
    for (letter, text) in &item.options {
        let norm = normalize_for_compare(text);
        if norm.is_empty() {
            out.push(Violation::new(
                format!("options.{letter}"),
                Rule::EmptyField,
                "option text is empty",
            ));
        }
        if let Some((first, _)) = seen.iter().find(|(_, t)| *t == norm) {
            out.push(Violation::new(
                format!("options.{letter}"),
                Rule::DuplicateOptions,
                format!("same text as option {first}"),
            ));
        }
        seen.push((*letter, norm));
    }
    match item.gold_text() {
        None => out.push(Violation::new(
            "answer",
            Rule::AnswerNotInOptions,
            format!("answer {} has no option", item.answer),
        )),
        Some(gold) => {
            let j = jaccard(&content_tokens(gold), &content_tokens(&item.question));
            if j > MAX_GOLD_QUESTION_JACCARD {
                out.push(Violation::new(
                    "question",
                    Rule::GoldQuestionOverlap,
                    format!("gold/question token Jaccard {j:.3} > {MAX_GOLD_QUESTION_JACCARD}"),
                ));
            }
        }
    }
    if let Some(ctx) = ctx {
        let observed: BTreeSet<String> = ctx
            .observed_scenes()
            .iter()
            .map(|s| normalize_for_compare(&s.description))
            .collect();
        for (letter, text) in &item.options {
            if *letter != item.answer && observed.contains(&normalize_for_compare(text)) {
                out.push(Violation::new(
                    format!("options.{letter}"),
                    Rule::VerbatimObservedDistractor,
                    "distractor repeats an observed scene verbatim",
                ));
            }
        }
    }
    if let Some(m) = item.subtask.hops() {
        let slots = item.question.matches(SLOT).count();
        if slots < m {
            out.push(Violation::new(
                "question",
                Rule::MissingSlot,
                format!("{slots} `{SLOT}` slot(s) for a {m}-hop question"),
            ));
        }
    }
    if !item.question.trim_start().starts_with(QUESTION_PREFIX) {
        out.push(Violation::new(
            "question",
            Rule::QuestionPrefix,
            format!("must start with \"{QUESTION_PREFIX}\""),
        ));
    }
    let order = &item.option_permutation.order;
    let distinct: BTreeSet<&Letter> = order.iter().collect();
    if order.len() != 4 || distinct.len() != 4 {
        out.push(Violation::new(
            "option_permutation.order",
            Rule::PermutationInvalid,
            "must list each of A, B, C, D once",
        ));
    }
    out
}
