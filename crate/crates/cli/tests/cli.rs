mod common;

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Output, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use nepkit::tuning::GrpoRecord;
use nepkit::*;

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Pipeline then genbench over the fixture corpus.
fn benchmark(dir: &Path, extra: &[&str]) -> (std::path::PathBuf, std::path::PathBuf) {
    let pipe = dir.join("pipe");
    let bench = dir.join("bench");
    let videos = videos_fixture();
    let instances = pipe.join("instances.jsonl");
    let mut args = extra.to_vec();
    args.extend(["--mock", "pipeline", "--videos", p(&videos), "--out", p(&pipe)]);
    ok(&nepkit(&args));
    let mut args = extra.to_vec();
    args.extend(["--mock", "genbench", "--instances", p(&instances), "--out", p(&bench)]);
    ok(&nepkit(&args));
    (instances, bench.join("benchmark.jsonl"))
}

#[test]
fn full_chain_over_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (instances, bench) = benchmark(dir.path(), &[]);

    let inst: Vec<NepInstance> = jsonl::read(&instances).unwrap();
    assert_eq!(inst.len(), 8);
    let items: Vec<QaItem> = jsonl::read(&bench).unwrap();
    assert_eq!(items.len(), 32);
    let text_only: Vec<QaItem> = jsonl::read(bench.with_file_name("text_only.jsonl")).unwrap();
    assert!(text_only.iter().all(|i| i.media_refs.is_empty()));

    let frames = dir.path().join("frames.jsonl");
    let out = ok(&nepkit(&[
        "segment",
        "--videos",
        p(&videos_fixture()),
        "--instances",
        p(&instances),
        "--out",
        p(&frames),
        "--frames",
        "8",
    ]));
    assert!(out.starts_with("8 frame manifest(s)"), "{out}");

    let report = ok(&nepkit(&["stats", p(&bench)]));
    assert!(report.contains("total items: 32"), "{report}");

    let eval_dir = dir.path().join("eval");
    let out = ok(&nepkit(&[
        "eval",
        "--benchmark",
        p(&bench),
        "--out",
        p(&eval_dir),
        "--subject",
        "oracle",
    ]));
    assert!(out.starts_with("answer_matching: letter"), "{out}");
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["overall"]["accuracy"], 1.0);
    ok(&nepkit(&[
        "--mock",
        "eval",
        "--benchmark",
        p(&bench),
        "--out",
        p(&eval_dir),
        "--mode",
        "text_only",
    ]));

    let tune = dir.path().join("tune");
    ok(&nepkit(&[
        "--mock",
        "export-tuning",
        "--instances",
        p(&instances),
        "--out",
        p(&tune),
    ]));
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tune.join("export_report.json")).unwrap()).unwrap();
    assert_eq!(r["leaks"], 0);
    assert_eq!(r["counts"]["sft"], 8);
    assert_eq!(r["counts"]["mix"], 8);

    let grpo = dir.path().join("grpo.jsonl");
    ok(&nepkit(&[
        "export-grpo",
        "--pool",
        p(&bench),
        "--out",
        p(&grpo),
        "--size",
        "10",
    ]));
    let records: Vec<GrpoRecord> = jsonl::read(&grpo).unwrap();
    assert_eq!(records.len(), 10);
    assert!(records
        .iter()
        .all(|r| matches!(r.subtask, Subtask::Extrap1Hop | Subtask::Extrap2Hop)));

    // excluding the benchmark's own videos leaves nothing
    let out = ok(&nepkit(&[
        "export-grpo",
        "--pool",
        p(&bench),
        "--out",
        p(&grpo),
        "--exclude-benchmark",
        p(&bench),
    ]));
    assert!(out.starts_with("0 record(s)"), "{out}");
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ia, ba) = benchmark(a.path(), &[]);
    let (ib, bb) = benchmark(b.path(), &["--sequential"]);
    assert_eq!(std::fs::read(ia).unwrap(), std::fs::read(ib).unwrap());
    assert_eq!(std::fs::read(ba).unwrap(), std::fs::read(bb).unwrap());
}

#[test]
fn genbench_seed_keeps_gold_and_moves_letters() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ba) = benchmark(a.path(), &[]);
    let (_, bb) = benchmark(b.path(), &["--seed", "5"]);
    let xs: Vec<QaItem> = jsonl::read(ba).unwrap();
    let ys: Vec<QaItem> = jsonl::read(bb).unwrap();
    assert_eq!(xs.len(), ys.len());
    let mut moved = 0;
    for (x, y) in xs.iter().zip(&ys) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.gold_text(), y.gold_text());
        moved += usize::from(x.answer != y.answer);
    }
    assert!(moved > 0);
}

#[test]
fn genbench_mix_caps_subtasks() {
    let dir = tempfile::tempdir().unwrap();
    let (instances, _) = benchmark(dir.path(), &[]);
    let out = dir.path().join("capped");
    ok(&nepkit(&[
        "--mock",
        "genbench",
        "--instances",
        p(&instances),
        "--out",
        p(&out),
        "--mix",
        "1hop=3,interp=2",
        "--subtasks",
        "1hop,interp",
    ]));
    let items: Vec<QaItem> = jsonl::read(out.join("benchmark.jsonl")).unwrap();
    assert_eq!(items.iter().filter(|i| i.subtask == Subtask::Extrap1Hop).count(), 3);
    assert_eq!(items.iter().filter(|i| i.subtask == Subtask::Interpolation).count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_eq!(code(&nepkit(&["--help"])), 0);
    assert_eq!(code(&nepkit(&["no-such-command"])), 2);
    assert_eq!(code(&nepkit(&["stats"])), 2);

    // no backend for the pipeline roles
    let o = nepkit(&["pipeline", "--videos", p(&videos_fixture()), "--out", p(&d.join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--mock"));

    let bad_cfg = d.join("bad.toml");
    std::fs::write(&bad_cfg, "[roles.nobody]\nbackend = \"http\"\n").unwrap();
    let o = nepkit(&[
        "--config",
        p(&bad_cfg),
        "--mock",
        "pipeline",
        "--videos",
        p(&videos_fixture()),
        "--out",
        p(&d.join("x")),
    ]);
    assert_eq!(code(&o), 2);
    std::fs::write(&bad_cfg, "not toml [").unwrap();
    assert_eq!(
        code(&nepkit(&["--config", p(&bad_cfg), "stats", p(&videos_fixture())])),
        2
    );
    assert_eq!(
        code(&nepkit(&[
            "--config",
            p(&d.join("missing.toml")),
            "stats",
            p(&videos_fixture())
        ])),
        2
    );
    assert_eq!(
        code(&nepkit(&[
            "--mock",
            "pipeline",
            "--videos",
            p(&videos_fixture()),
            "--out",
            p(&d.join("x")),
            "--frames",
            "0"
        ])),
        2
    );
    assert_eq!(
        code(&nepkit(&[
            "eval",
            "--benchmark",
            "b.jsonl",
            "--out",
            "o",
            "--mode",
            "audio"
        ])),
        2
    );

    // bad input data
    let garbage = d.join("garbage.jsonl");
    std::fs::write(&garbage, "{\"id\": 1}\n").unwrap();
    assert_eq!(code(&nepkit(&["stats", p(&garbage)])), 1);
    assert_eq!(code(&nepkit(&["stats", p(&d.join("absent.jsonl"))])), 1);

    // benchmark videos overlapping the training corpus
    let (instances, _) = benchmark(d, &[]);
    let o = nepkit(&[
        "--mock",
        "genbench",
        "--instances",
        p(&instances),
        "--out",
        p(&d.join("overlap")),
        "--exclude",
        p(&videos_fixture()),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("overlap"));
    assert!(!d.join("overlap/benchmark.jsonl").exists());
}

#[test]
fn ingest_builds_records_from_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("clip1.mp4"), b"").unwrap();
    std::fs::write(d.join("clip1.txt"), "A man opens a door. He walks inside.\n").unwrap();
    std::fs::write(d.join("clip1.json"), r#"{"source": "charades", "duration_s": 12.5}"#).unwrap();
    std::fs::write(d.join("clip2.txt"), "A cat sleeps on a chair.").unwrap();
    std::fs::write(d.join("clip2.json"), r#"{"duration_s": 4}"#).unwrap();
    let out = d.join("videos.jsonl");
    let stdout = ok(&nepkit(&[
        "ingest",
        "--dir",
        p(d),
        "--out",
        p(&out),
        "--source",
        "youtube",
    ]));
    assert!(stdout.starts_with("2 record(s)"), "{stdout}");
    let records: Vec<VideoRecord> = jsonl::read(&out).unwrap();
    assert_eq!(records[0].id, "clip1");
    assert_eq!(records[0].source, Source::Charades);
    assert_eq!(records[0].duration_s, 12.5);
    assert!(records[0].media_uri.ends_with("clip1.mp4"));
    assert_eq!(records[1].source, Source::Youtube);
    assert_eq!(records[1].caption, "A cat sleeps on a chair.");

    // negative duration fails validation
    std::fs::write(d.join("clip3.txt"), "A bird lands.").unwrap();
    std::fs::write(d.join("clip3.json"), r#"{"duration_s": -1}"#).unwrap();
    assert_eq!(code(&nepkit(&["ingest", "--dir", p(d), "--out", p(&out)])), 1);
}

/// Accepts and counts TCP connections, closing each one immediately.
fn counting_listener() -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            counter.fetch_add(1, Ordering::SeqCst);
            drop(stream);
        }
    });
    (format!("http://{addr}/v1/chat/completions"), hits)
}

fn http_config(dir: &Path, endpoint: &str) -> std::path::PathBuf {
    let mut toml = String::from("[gateway.retry]\nattempts = 1\nbase_delay_ms = 1\njitter = false\n");
    for role in nepkit::gateway::ModelRole::ALL {
        toml.push_str(&format!(
            "\n[roles.{}]\nbackend = \"http\"\nendpoint = \"{endpoint}\"\nmodel = \"m\"\ntimeout_s = 2\n",
            role.as_str()
        ));
    }
    let path = dir.join("http.toml");
    std::fs::write(&path, toml).unwrap();
    path
}

#[test]
fn mock_flag_never_touches_the_network() {
    let (endpoint, hits) = counting_listener();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = http_config(d, &endpoint);
    let c = p(&cfg);
    let pipe = d.join("pipe");
    let bench = d.join("bench");
    let inst = pipe.join("instances.jsonl");
    let items = bench.join("benchmark.jsonl");

    std::fs::write(d.join("a.txt"), "A dog runs.").unwrap();
    let videos = videos_fixture();
    let (ingested, frames, eval_out, tune, grpo) = (
        d.join("ingested.jsonl"),
        d.join("f.jsonl"),
        d.join("eval"),
        d.join("tune"),
        d.join("g.jsonl"),
    );
    let runs: Vec<Vec<&str>> = vec![
        vec!["ingest", "--dir", p(d), "--out", p(&ingested)],
        vec!["pipeline", "--videos", p(&videos), "--out", p(&pipe)],
        vec![
            "segment",
            "--videos",
            p(&videos),
            "--instances",
            p(&inst),
            "--out",
            p(&frames),
        ],
        vec!["genbench", "--instances", p(&inst), "--out", p(&bench)],
        vec!["stats", p(&items)],
        vec!["eval", "--benchmark", p(&items), "--out", p(&eval_out)],
        vec!["export-tuning", "--instances", p(&inst), "--out", p(&tune)],
        vec!["export-grpo", "--pool", p(&items), "--out", p(&grpo)],
    ];
    for args in runs {
        let mut full = vec!["--config", c, "--mock"];
        full.extend(args);
        ok(&nepkit(&full));
    }

    let store = d.join("store");
    let mut server = bin()
        .args([
            "--config",
            c,
            "--mock",
            "review-serve",
            "--store",
            p(&store),
            "--benchmark",
            p(&items),
            "--port",
            "0",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(server.stdout.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(banner.starts_with("review service on"), "{banner}");
    ok(&nepkit(&[
        "--config",
        c,
        "--mock",
        "review-export",
        "--store",
        p(&store),
        "--out",
        p(&d.join("r.jsonl")),
    ]));

    assert_eq!(hits.load(Ordering::SeqCst), 0, "a --mock run opened a connection");

    // control: the same config without --mock does reach the endpoint
    nepkit(&[
        "--config",
        c,
        "pipeline",
        "--videos",
        p(&videos_fixture()),
        "--out",
        p(&d.join("live")),
    ]);
    assert!(hits.load(Ordering::SeqCst) > 0);
}
