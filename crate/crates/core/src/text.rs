//! Small text utilities: word tokenization, stopwords, Jaccard overlap,
//! sentence splitting and quoted-span detection.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "between", "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most", "my", "no", "nor", "not",
    "now", "of", "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "same", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your",
];

/// Lowercased alphanumeric words in order.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

/// Distinct non-stopword tokens.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// |a ∩ b| / |a ∪ b|; two empty sets have overlap 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Process-independent 64-bit hash (first eight bytes of SHA-256).
pub fn stable_hash(text: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("eight bytes"))
}

/// Canonical form used to compare option texts for equality.
pub fn normalize_for_compare(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', '!', '?', ';', ',']).to_lowercase()
}

/// Splits prose into sentences on `.`, `!`, `?` followed by whitespace, and on
/// line breaks. Terminal punctuation stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (pos, &(idx, c)) in chars.iter().enumerate() {
            let next_is_space = chars.get(pos + 1).map_or(true, |(_, n)| n.is_whitespace());
            if matches!(c, '.' | '!' | '?') && next_is_space {
                let end = idx + c.len_utf8();
                let sentence = line[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = end;
            }
        }
        let rest = line[start..].trim();
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
    }
    out
}

/// Byte ranges strictly inside double-quoted spans (`"..."` or `“...”`).
/// An unmatched opening quote does not start a span.
pub fn quoted_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, char)> = None;
    for (idx, c) in text.char_indices() {
        match (open, c) {
            (None, '"') => open = Some((idx + 1, '"')),
            (None, '\u{201C}') => open = Some((idx + c.len_utf8(), '\u{201D}')),
            (Some((start, close)), c) if c == close => {
                spans.push(start..idx);
                open = None;
            }
            _ => {}
        }
    }
    spans
}

fn banned_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(caption|description)s?\b").expect("valid regex"))
}

/// A textual reference to a caption/description found in generated text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BannedReference {
    pub range: Range<usize>,
    pub quoted: bool,
}

/// All occurrences of `caption(s)` / `description(s)`, marking whether each
/// sits inside a quoted span.
pub fn banned_references(text: &str) -> Vec<BannedReference> {
    let spans = quoted_spans(text);
    banned_regex()
        .find_iter(text)
        .map(|m| BannedReference {
            range: m.range(),
            quoted: spans.iter().any(|s| s.start <= m.start() && m.end() <= s.end),
        })
        .collect()
}
