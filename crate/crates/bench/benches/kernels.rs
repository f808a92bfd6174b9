use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pkconvex::exterior::{f_and_gradient, MultiIndexTable};
use pkconvex::symfun::{quotient_derivatives, sigma};
use pkconvex::Jacobian;
use pkconvex_bench::{problem, sample_matrix};

fn symmetric_functions(c: &mut Criterion) {
    let mut group = c.benchmark_group("sigma");
    for m in [6usize, 20] {
        let lam: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * i as f64).collect();
        group.bench_with_input(BenchmarkId::new("sigma_k", m), &lam, |b, lam| {
            b.iter(|| sigma(black_box(lam.len() / 2), black_box(lam)))
        });
        group.bench_with_input(BenchmarkId::new("quotient_hessian", m), &lam, |b, lam| {
            b.iter(|| quotient_derivatives(lam.len() / 2, 1, black_box(lam), true))
        });
    }
    group.finish();
}

fn curvature_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("f_and_gradient");
    for (n, p, k, l) in [(3usize, 2usize, 2usize, 0usize), (6, 3, 10, 4)] {
        let table = MultiIndexTable::new(n, p).unwrap();
        let a = sample_matrix(n);
        group.bench_function(BenchmarkId::from_parameter(format!("n{n}_p{p}_k{k}_l{l}")), |b| {
            b.iter(|| f_and_gradient(black_box(&a), k, l, &table))
        });
    }
    group.finish();
}

fn discrete_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("pde");
    group.sample_size(20);
    for (name, res) in [("surface_harmonic", 32usize), ("sphere_harmonic", 16)] {
        let (disc, u) = problem(name, res);
        group.bench_function(BenchmarkId::new("residual", format!("{name}@{res}")), |b| {
            b.iter(|| disc.evaluate(black_box(&u)).unwrap())
        });
        let res_eval = disc.evaluate(&u).unwrap();
        group.bench_function(BenchmarkId::new("linearize", format!("{name}@{res}")), |b| {
            b.iter(|| disc.linearize_with(black_box(&u), &res_eval, Jacobian::Exact).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, symmetric_functions, curvature_operator, discrete_operator);
criterion_main!(benches);
