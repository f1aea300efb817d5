use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use topkcert::radius::{certify_bounds, DEFAULT_MU, EXACT_MU};
use topkcert::{construct_worst_case, solve_radius_t, ProbabilityBounds, ShiftRatio};

fn solve(c: &mut Criterion) {
    c.bench_function("solve_radius_t_k1", |b| {
        b.iter(|| solve_radius_t(black_box(0.8), black_box(0.15), 1, 0.5, DEFAULT_MU))
    });
    c.bench_function("solve_radius_t_k5_exact", |b| {
        b.iter(|| solve_radius_t(black_box(0.6), black_box(0.35), 5, 0.5, EXACT_MU))
    });
}

fn certify_from_bounds(c: &mut Criterion) {
    let uppers: Vec<f64> = (1..100).map(|i| 0.004 / i as f64).collect();
    let bounds = ProbabilityBounds::from_parts(0, 0.55, &uppers).unwrap();
    for k in [1, 5, 10] {
        c.bench_function(&format!("certify_bounds_c100_k{k}"), |b| {
            b.iter(|| certify_bounds(black_box(&bounds), k, 0.5, DEFAULT_MU, 0))
        });
    }
}

fn worst_case(c: &mut Criterion) {
    let bounds = ProbabilityBounds::from_parts(0, 0.5, &[0.2, 0.15, 0.1, 0.05]).unwrap();
    let shift = ShiftRatio::new(0.8).unwrap();
    c.bench_function("construct_worst_case_c5_k3", |b| {
        b.iter(|| construct_worst_case(black_box(&bounds), 3, shift, 0))
    });
}

criterion_group!(benches, solve, certify_from_bounds, worst_case);
criterion_main!(benches);
