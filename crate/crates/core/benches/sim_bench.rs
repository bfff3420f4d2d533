//! Throughput of the batch runner: rayon fan-out vs the sequential
//! reference path, over a mixed bag of configurations.
//!
//! Run with `cargo bench -p sdsim-core`. To measure the fallback build,
//! add `--no-default-features` (the "parallel" benchmark then degrades
//! to the sequential path by construction).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use sdsim_core::{
    gen_synthetic, run, run_batch, run_batch_seq, CutoffPolicy, Policy, RuntimeModel, SimConfig,
    SynthParams, Workload,
};

fn workload(jobs: usize) -> Workload {
    let params = SynthParams {
        jobs,
        mean_interarrival: 30.0,
        nodes_min: 1,
        nodes_max: 12,
        runtime_min: 120,
        runtime_max: 14_400,
        ..SynthParams::default()
    };
    let mut w = gen_synthetic(&params, 11).unwrap();
    w.mark_malleable(0.6, 11);
    w
}

/// A spread of policies, runtime models, and cutoffs — the shape of a
/// parameter sweep, where batching pays off.
fn sweep_configs() -> Vec<SimConfig> {
    let mut cfgs = Vec::new();
    for policy in [Policy::Static, Policy::SlowdownDriven] {
        for model in [RuntimeModel::Ideal, RuntimeModel::Worst] {
            for cutoff in [CutoffPolicy::DynamicAverage, CutoffPolicy::Fixed(4.0)] {
                cfgs.push(SimConfig {
                    policy,
                    runtime_model: model,
                    cutoff,
                    ..SimConfig::default()
                });
            }
        }
    }
    cfgs
}

fn bench_batch(c: &mut Criterion) {
    let w = workload(300);
    let cfgs = sweep_configs();
    let mut group = c.benchmark_group("batch_8_configs");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| run_batch(black_box(&w), black_box(&cfgs)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| run_batch_seq(black_box(&w), black_box(&cfgs)).unwrap())
    });
    group.finish();
}

fn bench_single_run(c: &mut Criterion) {
    let w = workload(1000);
    let mut group = c.benchmark_group("single_run_1k_jobs");
    group.sample_size(10);
    for (name, policy) in [("static", Policy::Static), ("sd", Policy::SlowdownDriven)] {
        let cfg = SimConfig { policy, ..SimConfig::default() };
        group.bench_function(name, |b| {
            b.iter(|| run(black_box(&w), black_box(&cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch, bench_single_run);
criterion_main!(benches);
