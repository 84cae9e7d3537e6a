//! Microbenchmarks for the stages a study spends its time in: Christoffel
//! sampling (with and without boosting), the two allocation solvers, both
//! decoders, and the QR behind snapshot discretization.
//!
//! Sizes follow the degree-6 synthetic study (n = 49 over D = 6 would be
//! 147; here d = 2, degree 5 gives n = 36 at m = 20n) and the finance
//! subspace (n = 32 snapshots on a 4096-point grid).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hls_core::allocation::{a_optimal_allocation, neyman_allocation, NoiseSource};
use hls_core::basis::{discretize_basis, tensor_legendre_basis};
use hls_core::decoder::{decode_plain, decode_reweighted, evaluate_budget, sample_design};
use hls_core::domain::{generate_points, standard_normal};
use hls_core::finance::{discounted_spread_payoff, spread_domain, spread_snapshots, BSModel};
use hls_core::sampler::{AcceptRule, BoostingPolicy};
use hls_core::{HyperRectangle, NoiseProfile, NoisyOracle, PointStream};

fn sampling(c: &mut Criterion) {
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(2), 5).unwrap();
    let m = 20 * basis.n();
    let stream = PointStream::scrambled_sobol(11, 2).unwrap();
    c.bench_function("sample_design/induced m=720 n=36", |b| {
        b.iter(|| sample_design(&basis, m, None, &stream).unwrap())
    });
    let policy = BoostingPolicy::new(10, 3.0, AcceptRule::MinCond).unwrap();
    c.bench_function("sample_design/boosted 10 trials", |b| {
        b.iter(|| sample_design(&basis, m, Some(&policy), &stream).unwrap())
    });
}

fn allocation(c: &mut Criterion) {
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(2), 5).unwrap();
    let m = 20 * basis.n();
    let stream = PointStream::scrambled_sobol(13, 2).unwrap();
    let design = sample_design(&basis, m, None, &stream).unwrap();
    let sigma2: Vec<f64> = design
        .points()
        .iter()
        .map(|x| (1.0 + 0.5 * (3.0 * x[0]).sin() + x[1] * x[1]).powi(2))
        .collect();
    let noise = NoiseProfile::new(sigma2, NoiseSource::Exact).unwrap();
    c.bench_function("allocation/neyman m=720", |b| {
        b.iter(|| neyman_allocation(&design, &noise).unwrap())
    });
    let delta = 1e-3 / m as f64;
    c.bench_function("allocation/a_optimal m=720 n=36", |b| {
        b.iter(|| a_optimal_allocation(&design, &noise, 10_000, delta).unwrap())
    });
}

fn decoding(c: &mut Criterion) {
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(2), 5).unwrap();
    let m = 20 * basis.n();
    let stream = PointStream::scrambled_sobol(17, 2).unwrap();
    let design = sample_design(&basis, m, None, &stream).unwrap();
    let sig = |x: &[f64]| 1.0 + x[0] * x[0] + 0.5 * x[1] * x[1];
    let sigma2: Vec<f64> = design.points().iter().map(|x| sig(x).powi(2)).collect();
    let noise = NoiseProfile::new(sigma2, NoiseSource::Exact).unwrap();
    let alloc = neyman_allocation(&design, &noise).unwrap();
    let oracle = NoisyOracle::new(move |x, rng| {
        (2.0 * x[0] + x[1]).cos() + sig(x) * standard_normal(rng)
    });
    let l = 10_000;
    let ev = evaluate_budget(&oracle, &design, &alloc, l, 7).unwrap();

    c.bench_function("evaluate_budget m=720 L=10000", |b| {
        b.iter(|| evaluate_budget(&oracle, &design, &alloc, l, 7).unwrap())
    });
    c.bench_function("decode/plain m=720 n=36", |b| {
        b.iter_batched(|| ev.clone(), |e| decode_plain(&design, &e).unwrap(), BatchSize::SmallInput)
    });
    c.bench_function("decode/reweighted m=720 n=36", |b| {
        b.iter_batched(
            || ev.clone(),
            |e| decode_reweighted(&design, &e, &alloc, &noise, l).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn discretization(c: &mut Criterion) {
    let model = BSModel::standard(0.3, 0.1, -0.3).unwrap();
    let (snaps, _) = spread_snapshots(&model, 32, 5);
    let mut stream = PointStream::scrambled_sobol(19, 5).unwrap();
    let grid = generate_points(&mut stream, 4096, &spread_domain()).unwrap();
    c.bench_function("discretize_basis q=4096 n=32", |b| {
        b.iter_batched(
            || (snaps.clone(), grid.clone()),
            |(s, g)| discretize_basis(s, g, None).unwrap(),
            BatchSize::LargeInput,
        )
    });
    let r = model.r();
    let s0 = model.s0();
    c.bench_function("spread_payoff single evaluation", |b| {
        b.iter(|| discounted_spread_payoff(r, s0, &[0.5, 0.1, 0.3, 0.1, -0.3], 0.7, -0.2))
    });
}

criterion_group!(benches, sampling, allocation, decoding, discretization);
criterion_main!(benches);
