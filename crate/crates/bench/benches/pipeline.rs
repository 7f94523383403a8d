use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use kwdrift::cluster::{kmeans, KMeansConfig};
use kwdrift::glove::train;
use kwdrift::{CooccurrenceTable, EmbeddingModel, Query, TrainConfig, TrainMode, Weighting};
use kwdrift_bench::{random_space, table, zipf_corpus};

fn cooccurrence(c: &mut Criterion) {
    let corpus = zipf_corpus(2000, 20, 5000, 1);
    let mut group = c.benchmark_group("cooccur");
    group.throughput(Throughput::Elements(2000 * 20));
    for window in [2usize, 10] {
        group.bench_with_input(BenchmarkId::new("build", window), &window, |b, &w| {
            b.iter(|| CooccurrenceTable::build(black_box(&corpus), 5000, w, Weighting::InverseDistance).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sharded4", window), &window, |b, &w| {
            b.iter(|| {
                CooccurrenceTable::build_sharded(black_box(&corpus), 5000, w, Weighting::InverseDistance, 4).unwrap()
            })
        });
    }
    group.finish();
}

fn glove_epoch(c: &mut Criterion) {
    let t = table(1000, 2000, 5);
    let cfg = TrainConfig {
        dim: 50,
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("glove");
    group.throughput(Throughput::Elements(t.nnz() as u64));
    group.sample_size(10);
    group.bench_function("epoch_deterministic", |b| {
        b.iter(|| {
            let m = EmbeddingModel::init(2000, 50, 1).unwrap();
            train(m, black_box(&t), &cfg, TrainMode::Deterministic).unwrap()
        })
    });
    group.bench_function("epoch_parallel4", |b| {
        b.iter(|| {
            let m = EmbeddingModel::init(2000, 50, 1).unwrap();
            train(m, black_box(&t), &cfg, TrainMode::Parallel { threads: 4 }).unwrap()
        })
    });
    group.finish();
}

fn neighbors(c: &mut Criterion) {
    let space = random_space(20_000, 50, 3);
    c.bench_function("nearest_neighbors_20k_k10", |b| {
        b.iter(|| space.nearest_neighbors(Query::Token(black_box("w17")), 10, &[] as &[&str]).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let space = random_space(2000, 50, 4);
    let cfg = KMeansConfig {
        k: 100,
        max_iter: 20,
        ..KMeansConfig::default()
    };
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    group.bench_function("n2000_k100_20iter", |b| {
        b.iter(|| kmeans(black_box(space.data()), 50, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cooccurrence, glove_epoch, neighbors, clustering);
criterion_main!(benches);
