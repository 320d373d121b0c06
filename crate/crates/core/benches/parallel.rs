//! Compares the rayon-dispatched sweep and oracle paths against the
//! sequential fallbacks on a mid-size instance.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use parlink::analysis::{epoa_sweep, epoa_sweep_serial};
use parlink::mechanisms::build_error_tolerant;
use parlink::model::Instance;
use parlink::oracle::{grid_opt_affine, GridSpec};

fn bench_instance() -> Instance {
    Instance::from_pairs(&[
        (1.0, 0.0),
        (2.0, 0.7),
        (0.5, 1.3),
        (3.0, 2.1),
        (1.5, 3.4),
        (0.8, 5.0),
    ])
}

fn bench_sweep(c: &mut Criterion) {
    let mechanism = build_error_tolerant(&bench_instance(), 8.0, 1.0).unwrap();
    let grid: Vec<f64> = (1..=1024).map(|i| i as f64 * 0.02).collect();

    let mut group = c.benchmark_group("epoa_sweep_1024");
    group.bench_function("dispatched", |b| {
        b.iter(|| epoa_sweep(black_box(&mechanism), black_box(&grid)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| epoa_sweep_serial(black_box(&mechanism), black_box(&grid)).unwrap())
    });
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let instance = Instance::from_pairs(&[(1.0, 0.0), (1.0, 1.0), (2.0, 1.5)]);
    let grid = GridSpec { step: 2e-3, max_links: 3 };

    let mut group = c.benchmark_group("grid_opt_m3");
    group.sample_size(20);
    group.bench_function("dispatched", |b| {
        b.iter(|| grid_opt_affine(black_box(&instance), black_box(2.0), &grid).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_oracle);
criterion_main!(benches);
