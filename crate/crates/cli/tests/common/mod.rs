#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nepkit::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nepkit"));
    cmd.env_remove("RUST_LOG");
    cmd
}

pub fn nepkit(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nepkit")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn videos_fixture() -> PathBuf {
    fixtures().join("videos.jsonl")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn options(texts: [&str; 4]) -> BTreeMap<Letter, String> {
    Letter::ALL.into_iter().zip(texts.map(String::from)).collect()
}

/// A well-formed 1-hop item whose gold is option A.
pub fn qa_item(id: &str, subtask: Subtask, source: Source) -> QaItem {
    let slots = match subtask.hops() {
        Some(m) => (1..=m).map(|i| format!("{i}. [?]")).collect::<Vec<_>>().join(" "),
        None => "1. the door opens 2. [?] 3. the lamp flickers 4. [?] 5. the room goes dark".into(),
    };
    QaItem {
        id: id.into(),
        video_id: format!("vid-{id}"),
        source,
        subtask,
        question: format!(
            "Based on the given video, predict future events and fill in the potential events: {slots} then the guests leave."
        ),
        options: options([
            "the host pours tea into small cups",
            "a child drops a plate on the floor",
            "the dog barks at the mail carrier",
            "someone turns up the radio volume",
        ]),
        answer: Letter::A,
        option_permutation: OptionPermutation::identity(0),
        provenance: Provenance::default(),
        review_state: ReviewState::Pending,
        explanation: None,
        media_refs: Vec::new(),
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vor", "pe", "dun", "li", "ma", "ko", "zen", "ra", "fi", "gol", "na", "te",
    "bri", "os", "ul", "cha", "wen", "di",
];

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect()
}

/// Videos with random sentence captions (1–10 sentences of 4–11 words).
pub fn random_corpus(seed: u64, videos: usize) -> Vec<VideoRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = Source::ALL;
    (0..videos)
        .map(|v| {
            let sentences = rng.random_range(1..=10);
            let caption = (0..sentences)
                .map(|_| {
                    let len = rng.random_range(4..=11);
                    let mut s = (0..len).map(|_| word(&mut rng)).collect::<Vec<_>>().join(" ");
                    s[..1].make_ascii_uppercase();
                    s.push('.');
                    s
                })
                .collect::<Vec<_>>()
                .join(" ");
            let id = format!("r{seed}-{v}");
            VideoRecord {
                media_uri: format!("media/{id}.mp4"),
                id,
                source: *sources.choose(&mut rng).expect("sources"),
                duration_s: rng.random_range(5.0..300.0),
                caption,
                scene_timestamps: None,
            }
        })
        .collect()
}
