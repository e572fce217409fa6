use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use elapsed_core::sweep::{sweep, SweepSettings};
use elapsed_core::{regime_scan, solve_activity_implicit, ActivityOptions, AgeGrid, Execution, FiringRateModel, InitialDatum};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn lambdas(n: usize, top: f64) -> Vec<f64> {
    (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
}

fn bench_regime_scan(c: &mut Criterion) {
    let grid = AgeGrid::new(1e-3, 10.0).unwrap();
    let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
    let ls = lambdas(16, 0.5);
    let mut group = c.benchmark_group("regime_scan");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| regime_scan(&model, black_box(&ls), &grid, 64, exec))
        });
    }
    group.finish();
}

fn bench_activity_batch(c: &mut Criterion) {
    let grid = AgeGrid::new(1e-3, 10.0).unwrap();
    let f0 = InitialDatum::uniform01().project(&grid).unwrap().state;
    let models: Vec<FiringRateModel> = lambdas(32, 0.4)
        .into_iter()
        .map(|l| FiringRateModel::step(0.5, 0.25, 1.0, l).unwrap())
        .collect();
    let opts = ActivityOptions::default();
    let mut group = c.benchmark_group("activity_batch");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(&models, |m| {
                    solve_activity_implicit(m, &grid, &f0.values, (0.0, 1.0), &opts).map(|s| s.mu).ok()
                })
            })
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let settings = SweepSettings {
        grid: AgeGrid::new(1e-2, 10.0).unwrap(),
        spectrum_grid: AgeGrid::new(2e-2, 10.0).unwrap(),
        t_end: 10.0,
        record_every: 10,
        fit_window: (2.0, 8.0),
        xi_samples: 16,
        fixed_point_tol: 1e-12,
        fixed_point_max_iter: 200,
    };
    let family = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
    let f0 = InitialDatum::uniform01().project(&settings.grid).unwrap().state;
    let ls = lambdas(4, 0.3);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&family, black_box(&ls), &f0, &settings, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_regime_scan, bench_activity_batch, bench_sweep);
criterion_main!(benches);
