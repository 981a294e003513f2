//! Benchmarks for the operations that dominate scenario runtime: Γ/Δ
//! evaluation, the heat kernel, resolvent steps, the Bakry-Émery eigencheck
//! and the exact W₂ simplex.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use curvlab::diffusion::resolvent_step;
use curvlab::entropy::EntropyModel;
use curvlab::gamma2::{be_check, WeightedOperator};
use curvlab::space::{gen, DensityField};
use curvlab::transport::w2_distance;

fn smooth_density(space: &Arc<curvlab::FiniteSpace>, freq: f64) -> DensityField {
    let n = space.len();
    let vals = DVector::from_fn(n, |x, _| {
        1.0 + 0.5 * (freq * 2.0 * std::f64::consts::PI * x as f64 / n as f64).sin()
    });
    DensityField::new(space, vals).unwrap().normalized(space).unwrap()
}

fn bench_pointwise_calculus(c: &mut Criterion) {
    let mut group = c.benchmark_group("gamma-laplacian");
    for &n in &[32usize, 128] {
        let sp = gen::circle(n).unwrap();
        let f = DVector::from_fn(n, |x, _| (x as f64 * 0.37).sin());
        let g = DVector::from_fn(n, |x, _| (x as f64 * 0.53).cos());
        group.bench_with_input(BenchmarkId::new("gamma", n), &n, |b, _| {
            b.iter(|| sp.gamma(std::hint::black_box(&f), std::hint::black_box(&g)))
        });
        group.bench_with_input(BenchmarkId::new("laplacian", n), &n, |b, _| {
            b.iter(|| sp.laplacian(std::hint::black_box(&f)))
        });
    }
    group.finish();
}

fn bench_heat_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("heat-kernel");
    group.sample_size(20);
    for &n in &[32usize, 128] {
        let sp = gen::circle(n).unwrap();
        let f = DVector::from_fn(n, |x, _| (x as f64 * 0.21).sin());
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| sp.heat_flow(std::hint::black_box(&f), 0.01).unwrap())
        });
    }
    group.finish();
}

fn bench_resolvent(c: &mut Criterion) {
    let mut group = c.benchmark_group("resolvent-step");
    group.sample_size(20);
    let model = EntropyModel::regularized_power(2.0, 0.01, 10.0).unwrap();
    for &n in &[32usize, 128] {
        let sp = Arc::new(gen::circle(n).unwrap());
        let rho = smooth_density(&sp, 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| resolvent_step(&sp, &model, std::hint::black_box(&rho), 1e-3).unwrap())
        });
    }
    group.finish();
}

fn bench_be_check(c: &mut Criterion) {
    let mut group = c.benchmark_group("be-check");
    group.sample_size(10);
    for &n in &[8usize, 24] {
        let sp = gen::circle(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| be_check(std::hint::black_box(&sp), 0.0, f64::INFINITY).unwrap())
        });
    }
    group.finish();
}

fn bench_w2_simplex(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2-simplex");
    group.sample_size(10);
    for &n in &[16usize, 64] {
        let sp = Arc::new(gen::circle(n).unwrap());
        let mu0 = smooth_density(&sp, 1.0);
        let mu1 = smooth_density(&sp, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| w2_distance(&sp, std::hint::black_box(&mu0), &mu1).unwrap())
        });
    }
    group.finish();
}

fn bench_weighted_poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted-poisson");
    group.sample_size(20);
    for &n in &[32usize, 128] {
        let sp = Arc::new(gen::circle(n).unwrap());
        let rho = smooth_density(&sp, 1.0);
        let op = WeightedOperator::new(&sp, &rho);
        let raw = DVector::from_fn(n, |x, _| (x as f64 * 0.91).sin());
        let shift = sp.integrate(&raw) / sp.total_mass();
        let ell = raw.map(|v| v - shift);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| op.poisson(&sp, std::hint::black_box(&ell)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_pointwise_calculus,
    bench_heat_kernel,
    bench_resolvent,
    bench_be_check,
    bench_w2_simplex,
    bench_weighted_poisson
);
criterion_main!(benches);
