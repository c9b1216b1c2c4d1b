use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use nepkit::bench::{contexts_for, generate_all};
use nepkit::gateway::{Gateway, MockBackend};
use nepkit::pipeline::{run_pipeline, CheckpointStore, PipelineOptions};
use nepkit::{Execution, NepInstance, Source, Subtask, VideoRecord};

const VERBS: [&str; 8] = [
    "opens", "lifts", "carries", "drops", "paints", "folds", "pours", "washes",
];
const THINGS: [&str; 8] = [
    "door", "ladder", "bucket", "plate", "kettle", "towel", "basket", "window",
];
const PLACES: [&str; 6] = ["kitchen", "garden", "garage", "hallway", "porch", "attic"];

fn corpus(n: usize) -> Vec<VideoRecord> {
    (0..n)
        .map(|v| {
            let caption = (0..8)
                .map(|s| {
                    let i = v * 8 + s;
                    format!(
                        "Person {v} {} the {} near the {} during step {s}.",
                        VERBS[i % 8],
                        THINGS[(i / 8) % 8],
                        PLACES[i % 6]
                    )
                })
                .collect::<Vec<_>>()
                .join(" ");
            VideoRecord {
                id: format!("bench-{v:04}"),
                source: Source::ALL[v % 5],
                media_uri: format!("media/bench-{v:04}.mp4"),
                duration_s: 60.0,
                caption,
                scene_timestamps: None,
            }
        })
        .collect()
}

/// Fresh per iteration so the response cache never answers.
fn gateway(latency: Duration) -> Gateway {
    Gateway::mock(Arc::new(MockBackend::simulated().with_latency(latency)))
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (label, latency) in [("cpu", Duration::ZERO), ("io_200us", Duration::from_micros(200))] {
        let videos = corpus(64);
        group.throughput(Throughput::Elements(videos.len() as u64));
        for exec in [Execution::Sequential, Execution::Parallel] {
            let opts = PipelineOptions {
                execution: exec,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), label), &videos, |b, videos| {
                b.iter_batched(
                    || gateway(latency),
                    |gw| run_pipeline(&gw, videos, &opts, &CheckpointStore::ephemeral()),
                    BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

fn genbench(c: &mut Criterion) {
    let instances: Vec<NepInstance> = run_pipeline(
        &gateway(Duration::ZERO),
        &corpus(64),
        &PipelineOptions::default(),
        &CheckpointStore::ephemeral(),
    )
    .instances;
    let contexts = contexts_for(&instances, &Subtask::ALL);
    let mut group = c.benchmark_group("genbench");
    group.throughput(Throughput::Elements(contexts.len() as u64));
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter_batched(
                || gateway(Duration::ZERO),
                |gw| generate_all(&gw, &contexts, 0, exec),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, pipeline, genbench);
criterion_main!(benches);
