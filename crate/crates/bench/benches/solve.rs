use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use txsched_core::harness::{baseline_constant_edf, generate, GeneratorConfig};
use txsched_core::oracle::{solve_projected_gradient, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use txsched_core::{solve, Instance, PowerModel};

fn instance(n: usize) -> Instance {
    let config = GeneratorConfig {
        n,
        horizon: n as f64,
        seed: 11,
        ..GeneratorConfig::default()
    };
    generate(&config).unwrap()
}

fn scheduler(c: &mut Criterion) {
    let model = PowerModel::default();
    let mut group = c.benchmark_group("solve");
    for n in [10, 25, 50, 100, 200] {
        let inst = instance(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| solve(black_box(inst), &model).unwrap())
        });
    }
    group.finish();
}

fn references(c: &mut Criterion) {
    let model = PowerModel::default();
    let small = instance(6);
    c.bench_function("oracle/projected_gradient/6", |b| {
        b.iter(|| {
            solve_projected_gradient(black_box(&small), &model, DEFAULT_TOL, DEFAULT_MAX_ITERS)
                .unwrap()
        })
    });
    let large = instance(200);
    c.bench_function("baseline/200", |b| {
        b.iter(|| baseline_constant_edf(black_box(&large), &model).unwrap())
    });
}

criterion_group!(benches, scheduler, references);
criterion_main!(benches);
