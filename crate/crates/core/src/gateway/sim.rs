//! Deterministic stand-in for every model role.
//!
//! The simulator reads the rendered stage prompt, recovers the inputs it was
//! built from, and answers the way a cooperative model would: events are the
//! caption's sentences, the split point sits a third of the way in, caption
//! parts are the scene sentences joined back together, and so on. It exists so
//! the full toolkit runs offline and byte-reproducibly; it makes no attempt to
//! be a good predictor.

use serde_json::{json, Value};

use super::backend::BackendReply;
use super::extract::{extract_json, parse_split_point, SchemaId};
use super::request::{ChatRequest, ModelRole};
use crate::model::{Letter, Subtask};
use crate::prompts;
use crate::text::{content_tokens, split_sentences, stable_hash, words};

/// Simulated reply, or `None` when the prompt is not recognised.
pub fn simulate(req: &ChatRequest) -> Option<BackendReply> {
    let prompt = req.first_user_content();
    let last_user = req
        .messages
        .iter()
        .rev()
        .find(|m| m.role == crate::model::Role::User)
        .map_or("", |m| m.content.as_str());
    match req.role {
        ModelRole::Captioner => Some(caption(req)),
        ModelRole::Analyst if prompt.starts_with("Below is the video caption:") => events(prompt),
        ModelRole::Analyst if prompt.starts_with("Below are the extracted events") => causal(prompt),
        ModelRole::Splitter => split(prompt),
        ModelRole::Reasoner => predict(prompt),
        ModelRole::Rewriter => rewrite(prompt),
        ModelRole::Critic => verify(prompt),
        ModelRole::QaGenerator => qa(prompt, req.seed.unwrap_or(0)),
        ModelRole::EvalSubject => Some(answer(last_user)),
        _ => None,
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    let to = if end.is_empty() { rest.len() } else { rest.find(end)? };
    Some(&rest[..to])
}

fn fenced(value: &Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(value).expect("json"))
}

fn caption(req: &ChatRequest) -> BackendReply {
    let media = req
        .messages
        .iter()
        .filter_map(|m| m.media_refs.as_ref())
        .flatten()
        .next()
        .map_or("clip", String::as_str);
    let stem = media
        .rsplit('/')
        .next()
        .unwrap_or(media)
        .split(['.', '#'])
        .next()
        .unwrap_or("clip");
    let subject = words(stem).join(" ");
    let subject = if subject.is_empty() {
        "clip".to_string()
    } else {
        subject
    };
    BackendReply::text(format!(
        "A person sets up the {subject} on a wooden table. The person adjusts each part of the {subject} with steady hands. \
The finished {subject} is lifted and shown to the camera."
    ))
}

fn events(prompt: &str) -> Option<BackendReply> {
    let caption = between(prompt, "Below is the video caption:\n", "\n\nTask:")?;
    let events: Vec<Value> = split_sentences(caption)
        .into_iter()
        .enumerate()
        .map(|(i, s)| json!({"scene": format!("Scene {}", i + 1), "description": s}))
        .collect();
    Some(BackendReply::text(fenced(&json!({ "events": events }))))
}

fn scene_descriptions(events_json: &str) -> Option<Vec<String>> {
    let value = extract_json(events_json, SchemaId::Events).ok()?;
    Some(
        value["events"]
            .as_array()?
            .iter()
            .filter_map(|e| e["description"].as_str().map(str::to_string))
            .collect(),
    )
}

fn causal(prompt: &str) -> Option<BackendReply> {
    let events = between(prompt, "from the video:\n", "\n\nOriginal video caption:")?;
    let n = scene_descriptions(events)?.len();
    let value = if n >= 3 {
        let k = (n / 3).max(1);
        json!({
            "suitable": "yes",
            "optimal_split_point": format!("between Scene {k} and Scene {}", k + 1),
            "reasoning": format!("The first {k} scenes set up what follows in the remaining {} scenes.", n - k),
        })
    } else {
        json!({
            "suitable": "no",
            "optimal_split_point": "",
            "reasoning": "Too few events to separate a cause from its outcome.",
        })
    };
    Some(BackendReply::text(fenced(&value)))
}

fn split(prompt: &str) -> Option<BackendReply> {
    let events = between(prompt, "The identified events:\n", "\n\nand the optimal split point:")?;
    let point = between(prompt, "and the optimal split point:\n", "\n\nOriginal video caption:")?;
    let scenes = scene_descriptions(events)?;
    let (k, _) = parse_split_point(point)?;
    let k = k.min(scenes.len());
    let value = json!({
        "caption_part1": scenes[..k].join(" "),
        "caption_part2": scenes[k..].join(" "),
    });
    Some(BackendReply::text(value.to_string()))
}

/// Words the prediction template itself contributes; ignored by the critic.
const PREDICTION_FILLER: &[&str] = &[
    "appears",
    "activity",
    "continues",
    "around",
    "leads",
    "toward",
    "outcome",
    "likely",
    "natural",
];

fn predict(prompt: &str) -> Option<BackendReply> {
    let part1 = prompt.rsplit_once("Caption:\n\n")?.1;
    let sentences = split_sentences(part1);
    let last = sentences.last()?;
    let focus: Vec<String> = content_tokens(last)
        .into_iter()
        .filter(|w| w.len() >= 4 && !PREDICTION_FILLER.contains(&w.as_str()))
        .collect();
    let pick = |salt: u64| -> String {
        if focus.is_empty() {
            "scene".to_string()
        } else {
            focus[(stable_hash(&format!("{part1}{salt}")) % focus.len() as u64) as usize].clone()
        }
    };
    let (a, b) = (pick(1), pick(2));
    let reasoning = format!(
        "The caption describes {} scenes so far. The last one mentions the {a}, so the next events probably build on it.",
        sentences.len()
    );
    let prediction = format!("It appears that the activity around the {a} continues and likely leads toward the {b}.");
    Some(BackendReply {
        content: prediction,
        reasoning: Some(reasoning),
        usage: None,
    })
}

fn rewrite(prompt: &str) -> Option<BackendReply> {
    let input = prompt.rsplit_once("Here is the input:\n")?.1;
    let out = input
        .replace("The caption describes", "The video shows")
        .replace("the caption describes", "the video shows")
        .replace("The description says", "The video shows")
        .replace("caption", "video")
        .replace("description", "video");
    Some(BackendReply::text(out))
}

fn verify(prompt: &str) -> Option<BackendReply> {
    let part2 = between(
        prompt,
        "What actually happened in the second part of the video:\n\n",
        "\n\nPrediction (derived",
    )?;
    let prediction = between(
        prompt,
        "Prediction (derived from the first part of the video):\n\n",
        "\n\nReasoning behind",
    )?;
    let truth = content_tokens(part2);
    let hit = content_tokens(prediction)
        .into_iter()
        .filter(|w| w.len() >= 5 && !PREDICTION_FILLER.contains(&w.as_str()))
        .find(|w| truth.contains(w));
    let value = match hit {
        Some(w) => json!({
            "Critique": format!("The prediction anticipates the {w}, which does appear in the second part."),
            "Conclusion": "right",
        }),
        None => json!({
            "Critique": "The predicted continuation does not match what happens in the second part.",
            "Conclusion": "wrong",
        }),
    };
    Some(BackendReply::text(fenced(&value)))
}

fn detect_subtask(prompt: &str) -> Option<Subtask> {
    Subtask::ALL.into_iter().find(|&s| {
        let text = prompts::qa_template(s).text;
        let prefix = &text[..text.find("{output_structure}").unwrap_or(text.len())];
        prompt.starts_with(prefix)
    })
}

fn trim_sentence(s: &str) -> String {
    s.trim().trim_end_matches(['.', '!', '?']).to_string()
}

fn join_events(parts: &[&String]) -> String {
    parts
        .iter()
        .map(|p| trim_sentence(p))
        .collect::<Vec<_>>()
        .join("; then ")
}

fn qa(prompt: &str, seed: u64) -> Option<BackendReply> {
    let subtask = detect_subtask(prompt)?;
    let input = &prompt[prompt.rfind("Input Data:")?..];
    let events: Vec<Value> =
        serde_json::from_str(between(input, "- Scene descriptions: ", "  \n- Observed Scenes: ")?).ok()?;
    let observed: Vec<Value> = serde_json::from_str(between(input, "- Observed Scenes: ", "\n- Last Scene: ")?).ok()?;
    let scenes: Vec<String> = events
        .iter()
        .filter_map(|e| e["description"].as_str().map(str::to_string))
        .collect();
    let n = scenes.len();
    let k = observed.len();
    let d = |i: usize| &scenes[i - 1];
    let observed_last = trim_sentence(d(k.max(1)));
    let lead =
        "Based on the given video, predict future events and fill in the potential events in the given future events:";

    let (question, gold, mut candidates) = match subtask.hops() {
        Some(m) => {
            if n < m + 2 {
                return None;
            }
            let missing: Vec<&String> = (n - m..n).map(d).collect();
            let mut slots: Vec<String> = (1..=m).map(|i| format!("{i}. [?]")).collect();
            slots.push(format!("{}. {}", m + 1, trim_sentence(d(n))));
            let question = format!("{lead} {}.", slots.join(" "));
            let gold = join_events(&missing);
            let mut candidates = Vec::new();
            if m >= 2 {
                let mut rev = missing.clone();
                rev.reverse();
                candidates.push(join_events(&rev));
                let mut rot = missing.clone();
                rot.rotate_left(1);
                candidates.push(join_events(&rot));
            }
            let mut end_first = missing.clone();
            end_first[0] = d(n);
            candidates.push(join_events(&end_first));
            candidates.push(format!("{observed_last} once more; then nothing else changes"));
            candidates.push(format!("{}; then {observed_last} again", trim_sentence(missing[0])));
            (question, gold, candidates)
        }
        None => {
            let j = n.checked_sub(k)?;
            if j < 5 {
                return None;
            }
            let i = 3 + (seed % (j as u64 - 4)) as usize;
            let question = format!(
                "{lead} 1. {} 2. [?] 3. {} 4. [?] 5. {}.",
                trim_sentence(d(k + 1)),
                trim_sentence(d(k + i)),
                trim_sentence(d(n))
            );
            let gold = join_events(&[d(k + 2), d(n - 1)]);
            let candidates = vec![
                join_events(&[d(n - 1), d(k + 2)]),
                join_events(&[d(k + i + 1), d(k + i - 1)]),
                join_events(&[d(k + i - 1), d(k + 2)]),
                join_events(&[d(k + 1), d(n - 1)]),
                join_events(&[d(k + 2), d(k + i)]),
                format!("{observed_last} once more; then nothing else changes"),
            ];
            (question, gold, candidates)
        }
    };
    candidates.retain(|c| *c != gold);
    let mut options = vec![gold];
    for c in candidates {
        if options.len() == 4 {
            break;
        }
        if !options.contains(&c) {
            options.push(c);
        }
    }
    let mut filler = 1;
    while options.len() < 4 {
        options.push(format!("The people leave before anything else happens ({filler})"));
        filler += 1;
    }
    let options: serde_json::Map<String, Value> = Letter::ALL
        .iter()
        .zip(options)
        .map(|(l, o)| (l.to_string(), Value::String(o)))
        .collect();
    let value = json!({
        "Question": question,
        "Options": options,
        "Answer": "A",
        "Explanation": "The correct option lists the missing events in the order they actually occur.",
    });
    Some(BackendReply::text(fenced(&value)))
}

fn answer(prompt: &str) -> BackendReply {
    let letter = Letter::from_index((stable_hash(prompt) % 4) as usize).expect("index < 4");
    BackendReply::text(format!("Answer: {letter}"))
}
