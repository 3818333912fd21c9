use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dses_core::benchgen::{make_instance, ScenarioConfig};
use dses_core::engines::mode_candidates;
use dses_core::{dses, Execution, SearchConfig};

fn executions() -> Vec<Execution> {
    if Execution::parallel_available() {
        vec![Execution::Sequential, Execution::Parallel]
    } else {
        vec![Execution::Sequential]
    }
}

fn bench_search(c: &mut Criterion) {
    let instance = make_instance(&ScenarioConfig {
        points_reference: 256,
        points_source: 256,
        pool_points: Some(512),
        rot_range_deg: 9.0,
        trans_range: 0.2,
        rng_seed: 1,
        ..ScenarioConfig::default()
    })
    .expect("benchmark instance");
    let base = SearchConfig::from_ranges(12f64.to_radians(), 3f64.to_radians(), 0.3, 0.025);

    let mut group = c.benchmark_group("dses");
    group.sample_size(10);
    for exec in executions() {
        let cfg = base.clone().with_execution(exec);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| dses(black_box(&instance.source), black_box(&instance.reference), cfg).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("mode_search");
    group.sample_size(10);
    for exec in executions() {
        let cfg = base.clone().with_execution(exec);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| mode_candidates(black_box(&instance.source), black_box(&instance.reference), cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_search);
criterion_main!(benches);
