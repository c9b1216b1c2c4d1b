//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary reads top to bottom;
//! exits non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Stdio};
use std::time::{Duration, Instant};

use common::*;
use nepkit::bench::{self, BenchStats, QaGenContext};
use nepkit::eval::{self, EvalMode, EvalOptions};
use nepkit::gateway::Gateway;
use nepkit::pipeline::{self, CheckpointStore, PipelineOptions};
use nepkit::tuning;
use nepkit::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn mock_gateway() -> Gateway {
    nepkit::config::Config::default()
        .build_gateway(true)
        .expect("mock gateway")
}

// 1 ------------------------------------------------------------------------

fn pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let started = Instant::now();
        let o = nepkit(&["--mock", "pipeline", "--videos", p(&videos_fixture()), "--out", p(&out)]);
        let elapsed = started.elapsed();
        assert!(
            o.status.success(),
            "pipeline failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(elapsed < Duration::from_secs(30), "run {run} took {elapsed:?}");
        let instances = std::fs::read(out.join(pipeline::INSTANCES_FILE)).unwrap();
        let report = std::fs::read(out.join(pipeline::REPORT_FILE)).unwrap();
        outputs.push((instances, report));
    }
    assert!(!outputs[0].0.is_empty(), "no instances produced");
    assert_eq!(outputs[0].0, outputs[1].0, "instances.jsonl differs between runs");
    assert_eq!(outputs[0].1, outputs[1].1, "pipeline_report.json differs between runs");
}

// 2 ------------------------------------------------------------------------

/// Independent containment oracle: lowercase alphanumeric tokens, word
/// 4-grams (whole sequence when shorter), contained at >= 0.7.
fn contained(scene: &str, part: &str) -> bool {
    fn toks(s: &str) -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
    let s = toks(scene);
    let p = toks(part);
    if s.is_empty() {
        return false;
    }
    let width = s.len().min(4);
    let grams: Vec<&[String]> = s.windows(width).collect();
    let hits = grams.iter().filter(|g| p.windows(width).any(|w| w == **g)).count();
    hits as f64 >= 0.7 * grams.len() as f64
}

fn split_coverage() {
    let gw = mock_gateway();
    let opts = PipelineOptions::default();
    let mut instances = 0;
    let mut violations = Vec::new();
    for seed in 0..100 {
        let videos = random_corpus(seed, 6);
        let run = pipeline::run_pipeline(&gw, &videos, &opts, &CheckpointStore::ephemeral());
        for inst in &run.instances {
            instances += 1;
            let k = inst.split_index().expect("instance has a split");
            let full = &inst.scene_list.scenes;
            let mut seen_in_parts = 0;
            for (i, scene) in full.iter().enumerate() {
                let in1 = contained(&scene.description, &inst.caption_split.part1);
                let in2 = contained(&scene.description, &inst.caption_split.part2);
                let ok = if i < k { in1 && !in2 } else { in2 && !in1 };
                if ok {
                    seen_in_parts += 1;
                } else {
                    violations.push(format!("{} scene {}", inst.video_id, i + 1));
                }
            }
            assert_eq!(seen_in_parts, full.len());
        }
    }
    assert!(instances > 100, "only {instances} instances over 100 corpora");
    assert!(
        violations.is_empty(),
        "{} violation(s): {:?}",
        violations.len(),
        &violations[..violations.len().min(5)]
    );
}

// 3 ------------------------------------------------------------------------

const TABLE_TOTALS: [(Subtask, usize); 4] = [
    (Subtask::Extrap1Hop, 173),
    (Subtask::Extrap2Hop, 193),
    (Subtask::Extrap3Hop, 201),
    (Subtask::Interpolation, 489),
];

const TABLE_SOURCES: [Source; 5] = [
    Source::Youtube,
    Source::Activitynet,
    Source::Youcook2,
    Source::Nextqa,
    Source::Charades,
];

/// Published per-source shares, column by column.
const TABLE_PERCENT: [[&str; 5]; 4] = [
    ["48.0", "23.1", "11.6", "8.7", "8.6"],
    ["37.3", "31.6", "10.4", "10.4", "10.3"],
    ["45.3", "24.9", "10.0", "10.0", "9.8"],
    ["51.9", "23.5", "8.2", "8.2", "8.2"],
];

/// Item counts behind each column.
const TABLE_COUNTS: [[usize; 5]; 4] = [
    [83, 40, 20, 15, 15],
    [72, 61, 20, 20, 20],
    [91, 50, 20, 20, 20],
    [254, 115, 40, 40, 40],
];

fn statistics_reproduction() {
    let mut items = Vec::new();
    for (col, (subtask, total)) in TABLE_TOTALS.iter().enumerate() {
        assert_eq!(TABLE_COUNTS[col].iter().sum::<usize>(), *total);
        for (row, source) in TABLE_SOURCES.iter().enumerate() {
            for n in 0..TABLE_COUNTS[col][row] {
                items.push(qa_item(
                    &format!("{}-{}-{n}", subtask.short(), source.as_str()),
                    *subtask,
                    *source,
                ));
            }
        }
    }
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("benchmark.jsonl");
    jsonl::write(&path, &items).unwrap();

    let o = nepkit(&["stats", p(&path), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: BenchStats = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats.total, 1056);
    for (col, (subtask, total)) in TABLE_TOTALS.iter().enumerate() {
        assert_eq!(stats.per_subtask[subtask], *total);
        for (row, source) in TABLE_SOURCES.iter().enumerate() {
            let got = format!("{:.1}", stats.source_percent[subtask][source]);
            assert_eq!(got, TABLE_PERCENT[col][row], "{subtask:?}/{source:?}");
        }
    }

    let o = nepkit(&["stats", p(&path)]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("1056"), "{table}");
    assert!(table.contains("48.0%") && table.contains("9.8%"), "{table}");
}

// 4 ------------------------------------------------------------------------

fn context() -> QaGenContext {
    QaGenContext {
        video_id: "vid".into(),
        source: Source::Youtube,
        caption: String::new(),
        events: SceneList::from_descriptions([
            "the host fills the kettle",
            "the host sets out cups",
            "guests arrive at the door",
            "the host pours tea into small cups",
            "everyone sits at the table",
            "the guests leave",
        ]),
        observed: 3,
        subtask: Subtask::Extrap1Hop,
        media_refs: Vec::new(),
    }
}

fn qa_validation() {
    let ctx = context();
    let base = qa_item("q", Subtask::Extrap1Hop, Source::Youtube);
    let with = |f: &dyn Fn(&mut QaItem)| {
        let mut it = base.clone();
        f(&mut it);
        it
    };
    let bad: Vec<(&str, QaItem, Rule)> = vec![
        (
            "three options",
            with(&|i| {
                i.options.remove(&Letter::D);
            }),
            Rule::OptionCount,
        ),
        (
            "two options",
            with(&|i| {
                i.options.remove(&Letter::C);
                i.options.remove(&Letter::D);
            }),
            Rule::OptionCount,
        ),
        (
            "exact duplicate",
            with(&|i| {
                i.options.insert(Letter::C, i.options[&Letter::B].clone());
            }),
            Rule::DuplicateOptions,
        ),
        (
            "duplicate modulo case",
            with(&|i| {
                i.options
                    .insert(Letter::D, "A child drops a plate on the floor.".into());
            }),
            Rule::DuplicateOptions,
        ),
        (
            "gold copied into question",
            with(&|i| {
                i.question = "Based on the given video, after the host pours tea into small cups: 1. [?]".into();
            }),
            Rule::GoldQuestionOverlap,
        ),
        (
            "gold paraphrased into question",
            with(&|i| {
                i.question = "Based on the given video, the host pours small cups of tea, then 1. [?]".into();
            }),
            Rule::GoldQuestionOverlap,
        ),
        (
            "observed scene as distractor",
            with(&|i| {
                i.options.insert(Letter::B, "the host sets out cups".into());
            }),
            Rule::VerbatimObservedDistractor,
        ),
        (
            "observed scene, recased",
            with(&|i| {
                i.options.insert(Letter::C, "The host fills the kettle.".into());
            }),
            Rule::VerbatimObservedDistractor,
        ),
        (
            "1-hop without slot",
            with(&|i| {
                i.question = i.question.replace("[?]", "something");
            }),
            Rule::MissingSlot,
        ),
        (
            "2-hop with one slot",
            with(&|i| {
                i.subtask = Subtask::Extrap2Hop;
            }),
            Rule::MissingSlot,
        ),
        (
            "3-hop with two slots",
            with(&|i| {
                i.subtask = Subtask::Extrap3Hop;
                i.question = i.question.replace("1. [?]", "1. [?] 2. [?]");
            }),
            Rule::MissingSlot,
        ),
        (
            "one option",
            with(&|i| {
                i.options.retain(|l, _| *l == Letter::A);
            }),
            Rule::OptionCount,
        ),
    ];
    assert_eq!(bad.len(), 12);
    for (name, item, rule) in &bad {
        let found = validate::rules(&bench::validate_item(item, Some(&ctx)));
        assert_eq!(found, BTreeSet::from([*rule]), "{name}");
    }

    let mut good = Vec::new();
    for (n, subtask) in Subtask::ALL.into_iter().cycle().take(12).enumerate() {
        let mut item = qa_item(&format!("good-{n}"), subtask, Source::ALL[n % 6]);
        let perm = bench::shuffle::permutation_for(&item.id, n as u64);
        bench::shuffle::apply(&mut item, perm);
        good.push(item);
    }
    assert!(good.iter().map(|i| i.answer).collect::<BTreeSet<_>>().len() > 1);
    for item in &good {
        let v = bench::validate_item(item, Some(&ctx));
        assert!(v.is_empty(), "{}: {v:?}", item.id);
    }
}

// 5 ------------------------------------------------------------------------

fn scoring_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut items = Vec::new();
    let mut outputs = BTreeMap::new();
    // what each output unambiguously says, decided independently of the extractor
    let mut says: BTreeMap<String, Option<Letter>> = BTreeMap::new();
    for n in 0..50 {
        let subtask = Subtask::ALL[n % 4];
        let mut item = qa_item(&format!("s{n:02}"), subtask, Source::ALL[n % 5]);
        item.answer = *Letter::ALL.choose(&mut rng).unwrap();
        item.media_refs = (0..40).map(|t| format!("media/s{n}.mp4#t={t}.000")).collect();
        let pick = *Letter::ALL.choose(&mut rng).unwrap();
        let (text, said) = match n % 5 {
            0 => (format!("The answer is {pick}."), Some(pick)),
            1 => (format!("{pick}) that one"), Some(pick)),
            2 => (format!("{pick}"), Some(pick)),
            3 => ("I cannot tell from these frames.".to_string(), None),
            _ => (format!("Answer: {pick}"), Some(pick)),
        };
        outputs.insert(item.id.clone(), text);
        says.insert(item.id.clone(), said);
        items.push(item);
    }
    let opts = EvalOptions::default();
    let (_, report) = eval::run_eval(&items, &eval::ScriptedSubject { outputs }, &opts);

    let mut overall = (0usize, 0usize);
    let mut by_subtask: BTreeMap<Subtask, (usize, usize)> = BTreeMap::new();
    for item in &items {
        let hit = usize::from(says[&item.id] == Some(item.answer));
        overall.0 += hit;
        overall.1 += 1;
        let e = by_subtask.entry(item.subtask).or_default();
        e.0 += hit;
        e.1 += 1;
    }
    assert_eq!((report.overall.correct, report.overall.total), overall);
    assert_eq!(report.overall.accuracy, overall.0 as f64 / overall.1 as f64);
    for (subtask, (c, t)) in by_subtask {
        let tally = &report.by_subtask[&subtask];
        assert_eq!((tally.correct, tally.total), (c, t), "{subtask:?}");
    }

    let (_, oracle) = eval::run_eval(&items, &eval::OracleSubject, &opts);
    assert_eq!(oracle.overall.accuracy, 1.0);
    let (_, adversarial) = eval::run_eval(&items, &eval::FixedLetterSubject('E'), &opts);
    assert_eq!(adversarial.overall.accuracy, 0.0);
    let text_only = EvalOptions {
        mode: EvalMode::TextOnly,
        ..opts
    };
    let (_, oracle_text) = eval::run_eval(&items, &eval::OracleSubject, &text_only);
    assert_eq!(oracle_text.overall.accuracy, 1.0);
}

// 6 ------------------------------------------------------------------------

fn reward_function() {
    let mut item = qa_item("r", Subtask::Extrap1Hop, Source::Youtube);
    item.answer = Letter::B;
    let cases: [(&str, f64); 30] = [
        // explicit answer phrase
        ("The answer is B.", 1.0),
        ("answer: B", 1.0),
        ("Answer is (B)", 1.0),
        ("The answer is C.", 0.0),
        ("A looks tempting, but the answer is B", 1.0),
        ("The answer is B. No wait, the answer is C.", 0.0),
        ("ANSWER IS B", 1.0),
        ("Final answer: **B**", 1.0),
        ("answer: option B", 1.0),
        ("Answer: B\nA) rejected", 1.0),
        // line-leading letter
        ("B) the cook folds the omelette", 1.0),
        ("B. the cook folds the omelette", 1.0),
        ("Thinking it over.\nB) final", 1.0),
        ("A) first\nB) second", 0.0),
        ("C.", 0.0),
        ("  (B) because of the ladder", 1.0),
        ("B) yes\nB) still yes", 1.0),
        ("The best is B\nA) was wrong", 0.0),
        // bare letter
        ("B", 1.0),
        ("I pick B", 1.0),
        ("I pick C", 0.0),
        ("Either A or B", 0.0),
        ("B, definitely B", 1.0),
        ("A video shows B", 0.0),
        // abstain
        ("", 0.0),
        ("no idea", 0.0),
        ("E", 0.0),
        ("option b", 0.0),
        ("ABCD", 0.0),
        ("answer: E", 0.0),
    ];
    let mut wrong = Vec::new();
    for (raw, expected) in cases {
        let r = eval::grpo_reward(&item, raw);
        if r != expected {
            wrong.push(format!("{raw:?}: got {r}, expected {expected}"));
        }
        let extracted = eval::extract_answer(raw);
        assert_eq!(r == 1.0, extracted == Some(Letter::B), "{raw:?}");
    }
    assert!(wrong.is_empty(), "{wrong:#?}");
}

// 7 ------------------------------------------------------------------------

fn grpo_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        let pool: Vec<QaItem> = (0..rng.random_range(0..300))
            .map(|n| {
                let mut it = qa_item(
                    &format!("t{trial}-{n}"),
                    *Subtask::ALL.choose(&mut rng).unwrap(),
                    *Source::ALL.choose(&mut rng).unwrap(),
                );
                it.video_id = format!("v{}", rng.random_range(0..40));
                it
            })
            .collect();
        let excluded: BTreeSet<String> = (0..rng.random_range(0..5))
            .map(|_| format!("v{}", rng.random_range(0..40)))
            .collect();
        let size = rng.random_range(0..400);
        let data = tuning::to_grpo_dataset(&pool, size, trial, &excluded);
        assert!(data.records.len() <= size);
        for r in &data.records {
            assert!(
                matches!(r.subtask, Subtask::Extrap1Hop | Subtask::Extrap2Hop),
                "{:?} in output",
                r.subtask
            );
            assert!(!excluded.contains(&r.video_id));
        }
    }
}

// 8 ------------------------------------------------------------------------

fn example(strategy: Strategy, n: usize) -> TuningExample {
    TuningExample {
        strategy,
        video_id: format!("{strategy:?}-{n}"),
        messages: vec![Message::user("predict"), Message::assistant("t")],
        target: "t".into(),
    }
}

fn mix_balance() {
    for seed in 0..20u64 {
        for blocks in [1usize, 2, 3] {
            let len = 999 * blocks;
            let pools = Strategy::ALL.map(|s| (0..len).map(|n| example(s, n)).collect::<Vec<_>>());
            let mix = tuning::mix_pools(pools, len, seed);
            assert_eq!(mix.examples.len(), len);
            for block in mix.examples.chunks(999) {
                let mut counts = BTreeMap::new();
                for ex in block {
                    *counts.entry(ex.strategy).or_insert(0usize) += 1;
                }
                let max = counts.values().max().unwrap();
                let min = Strategy::ALL
                    .iter()
                    .map(|s| counts.get(s).copied().unwrap_or(0))
                    .min()
                    .unwrap();
                assert!(max - min <= 1, "seed {seed}: {counts:?}");
            }
        }
    }
}

// 9 ------------------------------------------------------------------------

fn frame_time(r: &str) -> Option<f64> {
    r.rsplit_once("#t=").and_then(|(_, t)| t.parse().ok())
}

fn leakage() {
    let gw = mock_gateway();
    let opts = PipelineOptions {
        frames: 16,
        ..Default::default()
    };
    let mut corpora = vec![jsonl::read::<VideoRecord>(videos_fixture()).unwrap()];
    corpora.extend((0..20).map(|s| random_corpus(900 + s, 10)));
    let mut exported = 0;
    let mut media_refs = 0;
    let mut leaks = Vec::new();
    for videos in &corpora {
        let run = pipeline::run_pipeline(&gw, videos, &opts, &CheckpointStore::ephemeral());
        let by_id: BTreeMap<&str, &NepInstance> = run.instances.iter().map(|i| (i.video_id.as_str(), i)).collect();
        let media: BTreeMap<&str, &str> = videos.iter().map(|v| (v.id.as_str(), v.media_uri.as_str())).collect();
        let mut all: Vec<TuningExample> = Strategy::ALL
            .into_iter()
            .flat_map(|s| tuning::export(&run.instances, s).examples)
            .collect();
        all.extend(tuning::mix_schedule(&run.instances, 1).examples);
        for ex in &all {
            exported += 1;
            let inst = by_id[ex.video_id.as_str()];
            let split = inst.split_time_s.expect("split time");
            leaks.extend(tuning::leaked_refs(ex, inst));
            for r in ex.messages.iter().filter_map(|m| m.media_refs.as_ref()).flatten() {
                media_refs += 1;
                let ok =
                    r.starts_with(media[ex.video_id.as_str()]) && frame_time(r).is_some_and(|t| t >= 0.0 && t <= split);
                if !ok {
                    leaks.push(r.clone());
                }
            }
        }
    }
    assert!(exported > 0 && media_refs > 0, "nothing exported");
    assert!(
        leaks.is_empty(),
        "{} leaked ref(s): {:?}",
        leaks.len(),
        &leaks[..leaks.len().min(5)]
    );
}

// 10 -----------------------------------------------------------------------

fn frame_sampling() {
    let video = |duration_s| VideoRecord {
        id: "v".into(),
        source: Source::Other,
        media_uri: "v.mp4".into(),
        duration_s,
        caption: String::new(),
        scene_timestamps: None,
    };
    let m = segment::sample_frames(&video(60.0), (0.0, 32.0), 4, Coverage::ObservedPart).unwrap();
    assert_eq!(m.timestamps_s, vec![4.0, 12.0, 20.0, 28.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..5000 {
        let start = if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(0.0..3600.0)
        };
        let len = 10f64.powf(rng.random_range(-3.0..3.5));
        let end = start + len;
        let m = segment::sample_frames(
            &video(end + rng.random_range(0.0..10.0)),
            (start, end),
            32,
            Coverage::ObservedPart,
        )
        .unwrap();
        assert_eq!(m.timestamps_s.len(), 32);
        assert_eq!(m.frame_count, 32);
        assert!(
            m.timestamps_s.windows(2).all(|w| w[0] < w[1]),
            "not increasing on ({start}, {end})"
        );
        assert!(
            m.timestamps_s.iter().all(|t| *t >= start && *t <= end),
            "outside ({start}, {end})"
        );
    }
}

// 11 -----------------------------------------------------------------------

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(store: &Path, benchmark: Option<&Path>) -> Self {
        let mut cmd = bin();
        cmd.args(["review-serve", "--store", p(store), "--port", "0"]);
        if let Some(b) = benchmark {
            cmd.args(["--benchmark", p(b)]);
        }
        let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .trim()
            .strip_prefix("review service on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self { child, base }
    }

    fn agent() -> ureq::Agent {
        ureq::Agent::config_builder().http_status_as_error(false).build().into()
    }

    fn decide(&self, id: &str, body: Value) -> u16 {
        Self::agent()
            .post(&format!("{}/api/items/{id}/decision", self.base))
            .send_json(body)
            .unwrap()
            .status()
            .as_u16()
    }

    fn export(&self) -> Vec<QaItem> {
        Self::agent()
            .get(&format!("{}/api/export", self.base))
            .call()
            .unwrap()
            .body_mut()
            .read_json()
            .unwrap()
    }

    /// SIGKILL: no shutdown hooks, no flushing.
    fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

fn crash_safety() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let bench_path = dir.path().join("queue.jsonl");
    let mut queue: Vec<QaItem> = (0..5)
        .map(|n| qa_item(&format!("q{n}"), Subtask::ALL[n % 4], Source::ALL[n]))
        .collect();
    let dup = queue[2].options[&Letter::C].clone();
    queue[2].options.insert(Letter::D, dup);
    jsonl::write(&bench_path, &queue).unwrap();

    let mut fixed = queue[2].clone();
    fixed
        .options
        .insert(Letter::D, "the neighbour waves from the garden".into());

    // session 1: accept one, edit one, then crash
    let s = Server::start(&store, Some(&bench_path));
    assert_eq!(s.decide("q0", json!({"action": "accept", "reviewer": "r1"})), 200);
    assert_eq!(
        s.decide(
            "q2",
            json!({"action": "edit", "edited_item": queue[2], "reviewer": "r1"})
        ),
        422
    );
    assert_eq!(
        s.decide("q2", json!({"action": "edit", "edited_item": fixed, "reviewer": "r1"})),
        200
    );
    let before_crash = s.export();
    s.kill();

    // session 2: state survived; finish the queue, crash again
    let s = Server::start(&store, None);
    assert_eq!(s.export(), before_crash);
    assert_eq!(
        s.decide(
            "q1",
            json!({"action": "accept", "reviewer": "r2", "expected_state": "pending"})
        ),
        200
    );
    assert_eq!(s.decide("q3", json!({"action": "discard", "reviewer": "r2"})), 200);
    assert_eq!(
        s.decide(
            "q3",
            json!({"action": "accept", "reviewer": "r2", "expected_state": "pending"})
        ),
        409
    );
    let final_export = s.export();
    s.kill();

    let s = Server::start(&store, None);
    let replayed = s.export();
    s.kill();
    assert_eq!(replayed, final_export, "export after restart differs");

    let got: BTreeMap<&str, &QaItem> = replayed.iter().map(|i| (i.id.as_str(), i)).collect();
    assert_eq!(got.keys().copied().collect::<Vec<_>>(), ["q0", "q1", "q2"]);
    assert_eq!(got["q0"].options, queue[0].options);
    assert_eq!(got["q1"].options, queue[1].options);
    assert_eq!(got["q2"].options, fixed.options);
    assert_eq!(got["q0"].review_state, ReviewState::Accepted);
    assert_eq!(got["q2"].review_state, ReviewState::Edited);

    let o = nepkit(&[
        "review-export",
        "--store",
        p(&store),
        "--out",
        p(&dir.path().join("out.jsonl")),
    ]);
    assert!(o.status.success());
    assert_eq!(
        jsonl::read::<QaItem>(dir.path().join("out.jsonl")).unwrap(),
        final_export
    );
}

// --------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn()); 11] = [
        ("pipeline determinism", pipeline_determinism),
        ("split coverage", split_coverage),
        ("statistics reproduction", statistics_reproduction),
        ("qa validation", qa_validation),
        ("scoring oracle equivalence", scoring_oracle),
        ("reward function", reward_function),
        ("grpo export filter", grpo_filter),
        ("mix balance", mix_balance),
        ("leakage", leakage),
        ("frame sampling", frame_sampling),
        ("review crash safety", crash_safety),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {:>2} PASS  {name} ({secs:.2}s)", n + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {:>2} FAIL  {name}: {msg}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
