use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use switchpoint::benchmarks;
use switchpoint::fdcheck::fd_gradient;
use switchpoint::gradients::EvalSettings;
use switchpoint::optimizer::derivative_profile;
use switchpoint::Exec;

fn modes() -> Vec<Exec> {
    let mut m = vec![Exec::Sequential];
    if Exec::Parallel.is_parallel() {
        m.push(Exec::Parallel);
    }
    m
}

fn profile(c: &mut Criterion) {
    let b = benchmarks::by_name("jacobson", None).unwrap();
    let grid: Vec<f64> = (0..64).map(|i| 0.5 + 3.0 * i as f64 / 63.0).collect();
    let ev = EvalSettings::with_tolerance(1e-10);
    let mut g = c.benchmark_group("derivative_profile_jacobson_64");
    for exec in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |bch, &exec| {
            bch.iter(|| derivative_profile(&b.problem, &b.start, &grid, &ev, exec).unwrap())
        });
    }
    g.finish();
}

fn finite_differences(c: &mut Criterion) {
    let b = benchmarks::by_name("goddard", None).unwrap();
    let ev = EvalSettings::with_tolerance(1e-10);
    let mut g = c.benchmark_group("fd_gradient_goddard");
    for exec in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |bch, &exec| {
            bch.iter(|| fd_gradient(&b.problem, &b.start, &ev, 1e-6, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = sweeps;
    config = Criterion::default().sample_size(10);
    targets = profile, finite_differences
}
criterion_main!(sweeps);
