//! Strict JSON extraction from free-form model output.
//!
//! Repair is limited to stripping code fences and surrounding prose. The only
//! key rewriting is case normalization of `Critique` / `Conclusion` in critic
//! verdicts. The first JSON object found is the one checked; a later object is
//! never tried when the first fails its schema.

use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::model::{Conclusion, Letter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaId {
    Events,
    SplitDecision,
    CaptionSplit,
    Verdict,
    QaItem,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Events => "events",
            SchemaId::SplitDecision => "split_decision",
            SchemaId::CaptionSplit => "caption_split",
            SchemaId::Verdict => "verdict",
            SchemaId::QaItem => "qa_item",
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SchemaId::Events,
            SchemaId::SplitDecision,
            SchemaId::CaptionSplit,
            SchemaId::Verdict,
            SchemaId::QaItem,
        ]
        .into_iter()
        .find(|id| id.as_str() == s)
        .ok_or_else(|| format!("unknown schema `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no JSON object found in model output")]
    NoJsonFound,
    #[error("output does not match schema `{schema}`: {}", fields.join("; "))]
    SchemaMismatch { schema: SchemaId, fields: Vec<String> },
}

/// Finds the first JSON object in `content` and checks it against `schema`.
pub fn extract_json(content: &str, schema: SchemaId) -> Result<Value, ExtractError> {
    let mut object = first_object(content).ok_or(ExtractError::NoJsonFound)?;
    if schema == SchemaId::Verdict {
        normalize_verdict_keys(&mut object);
    }
    let problems = check_schema(&object, schema);
    if problems.is_empty() {
        Ok(Value::Object(object))
    } else {
        Err(ExtractError::SchemaMismatch {
            schema,
            fields: problems,
        })
    }
}

fn first_object(content: &str) -> Option<Map<String, Value>> {
    if let Some(inner) = fenced_block(content) {
        if let Some(obj) = scan_objects(inner) {
            return Some(obj);
        }
    }
    scan_objects(content)
}

/// Body of the first ``` fenced block, without the language tag line.
fn fenced_block(content: &str) -> Option<&str> {
    let open = content.find("```")?;
    let after = &content[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

fn scan_objects(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find('{') {
        let start = from + rel;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text[start..=end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}

/// Index of the brace closing the one at `start`, honouring JSON strings.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn normalize_verdict_keys(object: &mut Map<String, Value>) {
    for canonical in ["Critique", "Conclusion"] {
        if object.contains_key(canonical) {
            continue;
        }
        let variant = object.keys().find(|k| k.eq_ignore_ascii_case(canonical)).cloned();
        if let Some(k) = variant {
            let v = object.remove(&k).expect("key present");
            object.insert(canonical.to_string(), v);
        }
    }
}

fn require_str<'a>(obj: &'a Map<String, Value>, key: &str, problems: &mut Vec<String>) -> Option<&'a str> {
    match obj.get(key) {
        None => {
            problems.push(format!("{key}: missing"));
            None
        }
        Some(Value::String(s)) => Some(s),
        Some(other) => {
            problems.push(format!("{key}: expected string, found {}", type_name(other)));
            None
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check_schema(obj: &Map<String, Value>, schema: SchemaId) -> Vec<String> {
    let mut problems = Vec::new();
    match schema {
        SchemaId::Events => match obj.get("events") {
            Some(Value::Array(events)) if !events.is_empty() => {
                for (i, ev) in events.iter().enumerate() {
                    match ev {
                        Value::Object(ev) => {
                            for key in ["scene", "description"] {
                                let mut inner = Vec::new();
                                if let Some(s) = require_str(ev, key, &mut inner) {
                                    if s.trim().is_empty() {
                                        inner.push(format!("{key}: empty"));
                                    }
                                }
                                problems.extend(inner.into_iter().map(|p| format!("events[{i}].{p}")));
                            }
                            if let Some(Value::String(s)) = ev.get("scene") {
                                if crate::model::parse_scene_label(s).is_none() {
                                    problems.push(format!("events[{i}].scene: `{s}` is not a scene label"));
                                }
                            }
                        }
                        other => problems.push(format!("events[{i}]: expected object, found {}", type_name(other))),
                    }
                }
            }
            Some(Value::Array(_)) => problems.push("events: empty".into()),
            Some(other) => problems.push(format!("events: expected array, found {}", type_name(other))),
            None => problems.push("events: missing".into()),
        },
        SchemaId::SplitDecision => {
            let suitable = require_str(obj, "suitable", &mut problems);
            match suitable.map(|s| s.trim().to_ascii_lowercase()) {
                Some(s) if s == "yes" => {
                    if let Some(p) = require_str(obj, "optimal_split_point", &mut problems) {
                        if parse_split_point(p).is_none() {
                            problems.push(format!(
                                "optimal_split_point: `{p}` is not of the form `between Scene X and Scene Y`"
                            ));
                        }
                    }
                }
                Some(s) if s == "no" => {}
                Some(s) => problems.push(format!("suitable: `{s}` is neither `yes` nor `no`")),
                None => {}
            }
            if let Some(v) = obj.get("reasoning") {
                if !v.is_string() {
                    problems.push(format!("reasoning: expected string, found {}", type_name(v)));
                }
            }
        }
        SchemaId::CaptionSplit => {
            require_str(obj, "caption_part1", &mut problems);
            require_str(obj, "caption_part2", &mut problems);
        }
        SchemaId::Verdict => {
            require_str(obj, "Critique", &mut problems);
            if let Some(c) = require_str(obj, "Conclusion", &mut problems) {
                if Conclusion::parse(c).is_none() {
                    problems.push(format!("Conclusion: `{c}` is neither `right` nor `wrong`"));
                }
            }
        }
        SchemaId::QaItem => {
            require_str(obj, "Question", &mut problems);
            match obj.get("Options") {
                Some(Value::Object(opts)) if !opts.is_empty() => {
                    for (k, v) in opts {
                        if Letter::parse(k).is_none() {
                            problems.push(format!("Options.{k}: key is not one of A, B, C, D"));
                        }
                        if !v.is_string() {
                            problems.push(format!("Options.{k}: expected string, found {}", type_name(v)));
                        }
                    }
                }
                Some(Value::Object(_)) => problems.push("Options: empty".into()),
                Some(other) => problems.push(format!("Options: expected object, found {}", type_name(other))),
                None => problems.push("Options: missing".into()),
            }
            if let Some(a) = require_str(obj, "Answer", &mut problems) {
                if answer_letter(a).is_none() {
                    problems.push(format!("Answer: `{a}` is not one of A, B, C, D"));
                }
            }
            if let Some(v) = obj.get("Explanation") {
                if !v.is_string() {
                    problems.push(format!("Explanation: expected string, found {}", type_name(v)));
                }
            }
        }
    }
    problems
}

/// Accepts `B`, ` B `, `B.`, `B)` or `(B)` as an answer letter.
pub fn answer_letter(s: &str) -> Option<Letter> {
    let t = s.trim().trim_start_matches('(').trim_end_matches(['.', ')']);
    Letter::parse(t)
}

/// Parses `between Scene X and Scene Y` (case-insensitive) into `(X, Y)`.
pub fn parse_split_point(s: &str) -> Option<(usize, usize)> {
    let lower = s.trim().to_ascii_lowercase();
    let rest = lower.strip_prefix("between")?.trim_start();
    let (left, right) = rest.split_once(" and ")?;
    let x = crate::model::parse_scene_label(left)?;
    let y = crate::model::parse_scene_label(right.trim_end_matches('.'))?;
    Some((x, y))
}
