use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::Rng;
use std::hint::black_box;
use uowq_core::harness::{EnsembleSpec, FamilySpec, SourceSpec};
use uowq_core::kl::mc_expected_kl;
use uowq_core::optimizer::{solve_simplex_qp, QpMatrix};
use uowq_core::rng;

fn random_qp(k: usize, seed: u64) -> QpMatrix {
    let mut r = rng::seeded(seed);
    let a = DMatrix::from_fn(k, k, |_, _| r.random_range(-1.0..1.0));
    let diag = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            r.random_range(0.001..0.01)
        } else {
            0.0
        }
    });
    QpMatrix::new(a.transpose() * a / k as f64 + diag).expect("symmetric")
}

fn qp_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("simplex_qp");
    for k in [4, 16, 64] {
        let qp = random_qp(k, k as u64);
        group.bench_with_input(BenchmarkId::from_parameter(k), &qp, |b, qp| {
            b.iter(|| solve_simplex_qp(black_box(qp)).unwrap())
        });
    }
    group.finish();
}

fn mc_trials(c: &mut Criterion) {
    let spec = EnsembleSpec {
        family: FamilySpec::uniform_categorical(4),
        n0: 1000,
        sources: vec![
            SourceSpec {
                c: 1.0,
                budget: 1000,
                direction_seed: 1,
            },
            SourceSpec {
                c: 3.0,
                budget: 2000,
                direction_seed: 2,
            },
        ],
    };
    let ensemble = spec.build(0).unwrap();
    let plan = ensemble.optimal_plan().unwrap();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(20);
    group.bench_function("categorical_k2_100_trials", |b| {
        b.iter(|| mc_expected_kl(&ensemble, &plan, 100, black_box(7)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, qp_solve, mc_trials);
criterion_main!(benches);
