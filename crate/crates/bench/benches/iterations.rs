use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;

use psr_gmti::forward::{GradientMode, LiftedOperator};
use psr_gmti::harness::scaling_geometry;
use psr_gmti::instances::toy_geometry;
use psr_gmti::solvers::{RecoveryProblem, Solver, SolverConfig, ThresholdConvention};
use psr_gmti_bench::toy_data;

const SOLVERS: [Solver; 4] = [Solver::Pgd, Solver::Fista, Solver::Admm, Solver::Nonconvex];

/// Ten approximate-mode iterations on a synthetic backprojection.
fn approximate(c: &mut Criterion) {
    let mut group = c.benchmark_group("approximate");
    group.sample_size(10);
    for n in [2_025, 8_100, 32_400] {
        let op = LiftedOperator::with_cache_limit(scaling_geometry(25, n).unwrap(), 0);
        let mut spike = Array2::zeros(op.shape());
        spike[[0, 0]] = 1.0;
        let d = op.forward(&spike).unwrap();
        let g = Array2::from_shape_fn(op.shape(), |(a, b)| ((a * 7 + b * 3) % 11) as f64 / 11.0);
        let problem = RecoveryProblem::with_backprojection(&op, &d, g).unwrap();
        let cfg = SolverConfig {
            max_iters: 10,
            check_every: 0,
            k_cardinality: Some(n / 4),
            ..Default::default()
        };
        for solver in SOLVERS {
            group.bench_with_input(BenchmarkId::new(solver.name(), 25 * n), &cfg, |b, cfg| {
                b.iter(|| problem.solve(solver, cfg).unwrap())
            });
        }
    }
    group.finish();
}

/// Ten exact-gradient iterations on the toy instance.
fn exact(c: &mut Criterion) {
    let (op, d) = toy_data(toy_geometry());
    let problem = RecoveryProblem::new(&op, &d).unwrap();
    let cfg = SolverConfig {
        lambda: 1e-3,
        max_iters: 10,
        gradient_mode: GradientMode::Exact,
        threshold_convention: ThresholdConvention::Standard,
        k_cardinality: Some(2),
        ..Default::default()
    };
    let mut group = c.benchmark_group("exact");
    group.sample_size(10);
    for solver in SOLVERS {
        group.bench_function(solver.name(), |b| b.iter(|| problem.solve(solver, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, approximate, exact);
criterion_main!(benches);
