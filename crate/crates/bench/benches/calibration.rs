use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segconf::{
    collect_scores, conformal_quantile, critical_threshold_bisect, critical_threshold_exact,
    Experiment, ExperimentConfig, DEFAULT_BISECT_TOLERANCE,
};
use segconf_bench::dataset;

fn critical_scores(c: &mut Criterion) {
    let mut group = c.benchmark_group("critical_score");
    for side in [16, 32, 64] {
        let sample = &dataset(side, 1, 1)[0];
        group.bench_with_input(BenchmarkId::new("exact", side), sample, |b, s| {
            b.iter(|| critical_threshold_exact(black_box(s), 0.1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("bisect", side), sample, |b, s| {
            b.iter(|| critical_threshold_bisect(black_box(s), 0.1, DEFAULT_BISECT_TOLERANCE).unwrap())
        });
    }
    group.finish();
}

fn quantile(c: &mut Criterion) {
    let data = dataset(16, 400, 2);
    let scores = collect_scores(&data, 0.1).unwrap();
    c.bench_function("conformal_quantile/400", |b| {
        b.iter(|| conformal_quantile(black_box(&scores), 0.1).unwrap())
    });
    c.bench_function("collect_scores/400x16^3", |b| {
        b.iter(|| collect_scores(black_box(&data), 0.1).unwrap())
    });
}

fn trials(c: &mut Criterion) {
    let data = dataset(32, 400, 3);
    let exp = Experiment::new(&data);
    let cfg = ExperimentConfig {
        trials: 100,
        ..ExperimentConfig::new(0.1, 0.1)
    };
    let mut group = c.benchmark_group("run_trials");
    group.sample_size(10);
    group.bench_function("100x400", |b| b.iter(|| exp.run_trials(black_box(&cfg)).unwrap()));
    group.finish();
}

criterion_group!(benches, critical_scores, quantile, trials);
criterion_main!(benches);
