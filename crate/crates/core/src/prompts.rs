//! Prompt catalog.
//!
//! Stage templates live in `prompts/*.txt` and are used verbatim (including
//! trailing whitespace). Placeholders are `{snake_case}` names; literal JSON
//! braces in the templates never match that pattern.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::model::{Letter, QaItem, Subtask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub text: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}` has unbound placeholder `{{{name}}}`")]
    Unbound { template: &'static str, name: String },
    #[error("template `{template}` has no placeholder `{{{name}}}`")]
    UnknownBinding { template: &'static str, name: String },
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("valid regex"))
}

impl PromptTemplate {
    pub fn placeholders(&self) -> BTreeSet<&'static str> {
        placeholder_regex()
            .captures_iter(self.text)
            .map(|c| c.get(1).expect("group").as_str())
            .collect()
    }

    /// Substitutes every placeholder in one pass; bound values are never
    /// re-scanned, so captions containing `{...}` are safe.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let names = self.placeholders();
        if let Some((name, _)) = bindings.iter().find(|(n, _)| !names.contains(n)) {
            return Err(PromptError::UnknownBinding {
                template: self.id,
                name: name.to_string(),
            });
        }
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for caps in placeholder_regex().captures_iter(self.text) {
            let whole = caps.get(0).expect("match");
            let name = &caps[1];
            let value = bindings
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::Unbound {
                    template: self.id,
                    name: name.to_string(),
                })?;
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

macro_rules! template {
    ($name:ident, $id:literal) => {
        pub const $name: PromptTemplate = PromptTemplate {
            id: $id,
            text: include_str!(concat!("prompts/", $id, ".txt")),
        };
    };
}

template!(EVENT_IDENTIFICATION, "event_identification");
template!(CAUSAL_ANALYSIS, "causal_analysis");
template!(CAPTION_SPLITTING, "caption_splitting");
template!(COT_PREDICTION, "cot_prediction");
template!(REWRITE_REASONING, "rewrite_reasoning");
template!(REWRITE_PREDICTION, "rewrite_prediction");
template!(VERIFICATION, "verification");
template!(QA_EXTRAP_1HOP, "qa_extrap_1hop");
template!(QA_EXTRAP_2HOP, "qa_extrap_2hop");
template!(QA_EXTRAP_3HOP, "qa_extrap_3hop");
template!(QA_INTERPOLATION, "qa_interpolation");

/// Fact translation: the captioner sees the media attached to this message.
pub const FACT_TRANSLATION: PromptTemplate = PromptTemplate {
    id: "fact_translation",
    text: "Watch the video and generate a detailed caption that describes its visual facts. \
Describe every scene in chronological order, including the people, objects, their positions, \
movements and interactions, and how they change over time. Return only the caption.",
};

pub fn qa_template(subtask: Subtask) -> PromptTemplate {
    match subtask {
        Subtask::Extrap1Hop => QA_EXTRAP_1HOP,
        Subtask::Extrap2Hop => QA_EXTRAP_2HOP,
        Subtask::Extrap3Hop => QA_EXTRAP_3HOP,
        Subtask::Interpolation => QA_INTERPOLATION,
    }
}

pub fn catalog() -> [PromptTemplate; 12] {
    [
        FACT_TRANSLATION,
        EVENT_IDENTIFICATION,
        CAUSAL_ANALYSIS,
        CAPTION_SPLITTING,
        COT_PREDICTION,
        REWRITE_REASONING,
        REWRITE_PREDICTION,
        VERIFICATION,
        QA_EXTRAP_1HOP,
        QA_EXTRAP_2HOP,
        QA_EXTRAP_3HOP,
        QA_INTERPOLATION,
    ]
}

/// Value bound to `{output_structure}` in the question-construction prompts.
pub const QA_OUTPUT_STRUCTURE: &str = r#"{
  "Question": "Based on the given video, ...",
  "Options": {
    "A": "...",
    "B": "...",
    "C": "...",
    "D": "..."
  },
  "Answer": "A/B/C/D",
  "Explanation": "Why the answer is correct and the other options are not."
}"#;

/// Version tag of the tuning-export instructions below.
pub const TUNING_PROMPT_VERSION: &str = "nep-v1";

/// User instruction for next-event prediction tuning examples.
pub const NEP_INSTRUCTION: &str = "Based on the given video, predict what happens next.";

/// Critique-tuning framing: the observed video comes first, then the
/// prediction to critique.
pub fn cft_user_prompt(prediction: &str) -> String {
    format!(
        "{NEP_INSTRUCTION}\n\nA model predicted the following continuation:\n\n{prediction}\n\n\
Critique this prediction against what actually happens next in the video, then conclude with \
\"Conclusion: right\" or \"Conclusion: wrong\"."
    )
}

pub const DISTILL_THINK_OPEN: &str = "<think>\n";
pub const DISTILL_DELIMITER: &str = "\n</think>\n\n";

pub const MCQ_ANSWER_INSTRUCTION: &str = "Answer with the option's letter from the given choices directly.";

/// Multiple-choice prompt text shared by evaluation and the GRPO export.
pub fn mcq_prompt(item: &QaItem) -> String {
    let mut out = item.question.trim().to_string();
    out.push_str("\n\n");
    for letter in Letter::ALL {
        if let Some(text) = item.options.get(&letter) {
            out.push_str(&format!("{letter}. {}\n", text.trim()));
        }
    }
    out.push('\n');
    out.push_str(MCQ_ANSWER_INSTRUCTION);
    out
}
