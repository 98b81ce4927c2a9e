use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gas_bench::fixture;
use gas_core::autodiff::recorded::loss_param_gradient_recorded;
use gas_core::autodiff::batch::jets;
use gas_core::autodiff::loss_param_gradient;
use gas_core::network::OptimizerState;
use gas_core::rng::stage_rng;
use gas_core::sampler::{build_covariance, build_mixture, residual_input_gradients, sample_mixture, select_means_top};
use gas_core::{AdamConfig, AdamState, BoxDomain, PdeProblem};

fn gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_gradient");
    g.sample_size(20);
    let f = fixture(PdeProblem::one_peak(), 32, 500, 200);
    g.bench_function("one_peak_500x200", |b| {
        b.iter(|| loss_param_gradient(&f.params, &f.problem, &f.interior, &f.boundary, 1.0).unwrap())
    });
    let f = fixture(PdeProblem::high_dim(10), 64, 500, 500);
    g.bench_function("dim10_500x500", |b| {
        b.iter(|| loss_param_gradient(&f.params, &f.problem, &f.interior, &f.boundary, 1.0).unwrap())
    });
    let f = fixture(PdeProblem::one_peak(), 8, 16, 8);
    g.bench_function("tape_one_peak_16x8_width8", |b| {
        b.iter(|| loss_param_gradient_recorded(&f.params, &f.problem, &f.interior, &f.boundary, 1.0).unwrap())
    });
    g.finish();
}

fn jet_batches(c: &mut Criterion) {
    let mut g = c.benchmark_group("jets");
    for n in [64usize, 1024, 8192] {
        let f = fixture(PdeProblem::one_peak(), 32, n, 1);
        g.bench_with_input(BenchmarkId::new("one_peak", n), &f, |b, f| b.iter(|| jets(&f.params, &f.interior).unwrap()));
    }
    g.finish();
}

fn adam(c: &mut Criterion) {
    let f = fixture(PdeProblem::one_peak(), 32, 500, 200);
    let grad = loss_param_gradient(&f.params, &f.problem, &f.interior, &f.boundary, 1.0)
        .unwrap()
        .gradient;
    let mut params = f.params.clone();
    let mut state = OptimizerState::Adam(AdamState::new(&params, AdamConfig::default()));
    c.bench_function("adam_step_6x32", |b| b.iter(|| state.apply(&mut params, black_box(&grad)).unwrap()));
}

fn sampler(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampler");
    g.sample_size(20);
    let f = fixture(PdeProblem::one_peak(), 32, 20_000, 1);
    let samples = gas_core::sampler::evaluate_validation_residuals(&f.params, &f.problem, &f.interior).unwrap();
    g.bench_function("validation_residuals_20000", |b| {
        b.iter(|| gas_core::sampler::evaluate_validation_residuals(&f.params, &f.problem, &f.interior).unwrap())
    });
    g.bench_function("select_top_20", |b| b.iter(|| select_means_top(black_box(&samples), 20).unwrap()));
    g.bench_function("select_local_20_k10", |b| {
        b.iter(|| gas_core::sampler::select_means_local(black_box(&samples[..5000]), 20, 10).unwrap())
    });
    let means = select_means_top(&samples, 20).unwrap();
    g.bench_function("fd_residual_gradients_20", |b| {
        b.iter(|| residual_input_gradients(&f.params, &f.problem, &means, 1e-4).unwrap())
    });
    let grads = residual_input_gradients(&f.params, &f.problem, &means, 1e-4).unwrap();
    let vars: Vec<Vec<f64>> = grads.iter().map(|g| build_covariance(g, 1.0, 1e-6, 0.25)).collect();
    let mix = build_mixture(means, vars).unwrap();
    let dom = BoxDomain::new(2);
    g.bench_function("sample_mixture_20x25", |b| {
        let mut rng = stage_rng(0, "bench_draw");
        b.iter(|| sample_mixture(&mix, 25, &dom, &mut rng))
    });
    g.finish();
}

criterion_group!(kernels, gradient, jet_batches, adam, sampler);
criterion_main!(kernels);
