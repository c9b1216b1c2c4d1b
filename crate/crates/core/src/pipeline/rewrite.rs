//! Rule-based fallback for removing caption/description references.
//!
//! Applied only when the rewriter model's output still mentions a caption or
//! description outside quotes. Quoted spans are never touched.

use std::sync::OnceLock;

use regex::{Captures, Regex};

use crate::text::quoted_spans;

/// Ordered (pattern, replacement) rules; earlier, more specific phrases win.
const RULES: &[(&str, &str)] = &[
    (
        r"(?i)\bthe (?:description|caption)s? (?:says|say|states|state|describes|describe|shows|show)\b",
        "the video shows",
    ),
    (
        r"(?i)\bthe (?:description|caption)s? (suggests|suggest|indicates|indicate|implies|imply|mentions|mention)\b",
        "the video $1",
    ),
    (
        r"(?i)\baccording to the (?:description|caption)s?\b",
        "according to the video",
    ),
    (
        r"(?i)\b(?:as )?(?:described|captioned) in the (?:description|caption)s?\b",
        "as seen in the video",
    ),
    (
        r"(?i)\b(?:the|this|that|a|an) (?:video )?(?:description|caption)s?\b",
        "the video",
    ),
    (r"(?i)\b(?:description|caption)s?\b", "video"),
];

fn compiled() -> &'static [(Regex, &'static str)] {
    static RE: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    RE.get_or_init(|| {
        RULES
            .iter()
            .map(|(p, r)| (Regex::new(p).expect("valid rule"), *r))
            .collect()
    })
}

fn match_case(matched: &str, replacement: String) -> String {
    if matched.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => replacement,
        }
    } else {
        replacement
    }
}

fn rewrite_segment(segment: &str) -> String {
    let mut text = segment.to_string();
    for (re, replacement) in compiled() {
        text = re
            .replace_all(&text, |caps: &Captures| {
                let mut expanded = String::new();
                caps.expand(replacement, &mut expanded);
                match_case(&caps[0], expanded.to_lowercase())
            })
            .into_owned();
    }
    text
}

/// Substitutes banned references outside quoted spans.
pub fn fallback_rewrite(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in quoted_spans(text) {
        // Keep the opening quote with the untouched span.
        let open = text[..span.start].char_indices().last().map_or(span.start, |(i, _)| i);
        out.push_str(&rewrite_segment(&text[last..open]));
        out.push_str(&text[open..span.end]);
        last = span.end;
    }
    out.push_str(&rewrite_segment(&text[last..]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_examples() {
        assert_eq!(
            fallback_rewrite("The caption suggests rain."),
            "The video suggests rain."
        );
        assert_eq!(
            fallback_rewrite("the description says a dog barks"),
            "the video shows a dog barks"
        );
        assert_eq!(
            fallback_rewrite("According to the caption, it rains."),
            "According to the video, it rains."
        );
    }

    #[test]
    fn untouched_without_references() {
        let s = "Nothing to change here.\nSecond line, \"quoted\".";
        assert_eq!(fallback_rewrite(s), s);
    }

    #[test]
    fn quoted_reference_survives() {
        let s = "He wrote \"see the caption\" and the caption shows it.";
        assert_eq!(
            fallback_rewrite(s),
            "He wrote \"see the caption\" and the video shows it."
        );
    }

    #[test]
    fn no_unquoted_reference_remains() {
        let s = "Descriptions vary. This caption is odd; the video description helps.";
        let out = fallback_rewrite(s);
        assert!(crate::text::banned_references(&out).is_empty(), "{out}");
    }
}
