use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lrt_bench::{noise_sequence, noisy_group, random_matrix};
use lrt_core::grouping::{match_group, Coord, GroupingConfig};
use lrt_core::tensor::{svt, weighted_svt, Dims};
use lrt_core::{solve_group, SolverConfig};

fn bench_svt(c: &mut Criterion) {
    let m = random_matrix(30, 180, 1);
    c.bench_function("svt 30x180", |b| b.iter(|| svt(black_box(&m), 0.5, None).unwrap()));
    c.bench_function("weighted_svt 30x180", |b| b.iter(|| weighted_svt(black_box(&m), 0.5, 1e-6).unwrap()));
}

fn bench_solve(c: &mut Criterion) {
    let y = noisy_group(Dims::new(36, 5, 30), 0.1, 2);
    let cfg = SolverConfig::default();
    c.bench_function("solve_group default 36x5x30", |b| b.iter(|| solve_group(black_box(&y), &cfg).unwrap()));
    let prox_only = SolverConfig { lambda: 0.0, ..cfg };
    c.bench_function("solve_group lambda=0 36x5x30", |b| {
        b.iter(|| solve_group(black_box(&y), &prox_only).unwrap())
    });
}

fn bench_match(c: &mut Criterion) {
    let seq = noise_sequence(5, 96, 96, 3);
    let cfg = GroupingConfig::default();
    c.bench_function("match_group 96x96x5", |b| {
        b.iter(|| match_group(black_box(&seq), Coord::new(2, 44, 44), &cfg).unwrap())
    });
}

criterion_group!(benches, bench_svt, bench_solve, bench_match);
criterion_main!(benches);
