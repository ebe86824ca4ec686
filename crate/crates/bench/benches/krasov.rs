use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use krasov_bench::hvac_run;
use krasov_core::simulate::passivity_audit;
use krasov_core::{annihilator, check_all, simulate_closed_loop, simulate_prolonged, CheckConfig, HvacModel, HvacParams};
use nalgebra::{dvector, DMatrix, DVector};
use std::hint::black_box;

fn assumption_checks(c: &mut Criterion) {
    let model = HvacModel::new(HvacParams::default()).unwrap();
    let mut group = c.benchmark_group("check_all");
    for samples in [100, 1000] {
        let cfg = CheckConfig { samples, ..Default::default() };
        group.bench_with_input(BenchmarkId::new("hvac2z", samples), &cfg, |b, cfg| {
            b.iter(|| check_all(&model, black_box(cfg)))
        });
    }
    group.finish();
}

fn left_annihilator(c: &mut Criterion) {
    let g = DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64).sin() + if i == j { 2.0 } else { 0.0 });
    c.bench_function("annihilator 8x3", |b| b.iter(|| annihilator(black_box(&g)).unwrap()));
}

fn closed_loop(c: &mut Criterion) {
    let (model, cfg) = hvac_run(1.0);
    let mut group = c.benchmark_group("hvac2z 1000 steps");
    group.sample_size(20);
    group.bench_function("closed loop", |b| b.iter(|| simulate_closed_loop(&model, black_box(&cfg)).unwrap()));
    let trace = simulate_closed_loop(&model, &cfg).unwrap();
    group.bench_function("passivity audit", |b| b.iter(|| passivity_audit(black_box(&trace), &cfg.gains)));
    let dx0: DVector<f64> = dvector![0.1, 0.0, 0.0, 0.0];
    group.bench_function("prolonged", |b| {
        b.iter(|| simulate_prolonged(&model, black_box(&cfg), &dx0, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assumption_checks, left_annihilator, closed_loop);
criterion_main!(benches);
