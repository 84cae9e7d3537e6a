//! Cross-module invariants. Anything that must hold for *all* inputs runs
//! under proptest; the statistical and asymptotic comparisons use pinned
//! seeds and tolerances wide enough to be deterministic in practice.

use hls_core::allocation::{
    integerize, neyman_allocation, objective_g, project_onto_simplex, uniform_allocation,
    NoiseSource,
};
use hls_core::basis::{christoffel, tensor_legendre_basis};
use hls_core::decoder::{evaluate_budget, sample_design, NoisyOracle};
use hls_core::domain::{generate_points, quadrature_integral, standard_normal, ProductMeasure};
use hls_core::finance::{synth_market_with_se, BSModel};
use hls_core::{HyperRectangle, NoiseProfile, PointStream, SampleDesign};
use proptest::prelude::*;
use std::sync::Arc;

const HALTON_BASES: [u32; 3] = [2, 3, 5];

fn stream_of(kind: u8, seed: u64, dim: usize) -> PointStream {
    match kind {
        0 => PointStream::iid(seed, dim),
        1 => PointStream::halton(&HALTON_BASES[..dim]).unwrap(),
        _ => PointStream::scrambled_sobol(seed, dim).unwrap(),
    }
}

/// Equispaced interior points of [-1, 1] carrying a degree-1 basis.
fn toy_design(m: usize) -> SampleDesign {
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(1), 1).unwrap();
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| vec![-1.0 + 2.0 * (i + 1) as f64 / (m + 1) as f64])
        .collect();
    SampleDesign::assemble(basis, points, vec![1.0; m], None, "toy".into()).unwrap()
}

fn simplex_instances() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (2usize..=16).prop_flat_map(|m| {
        (
            prop::collection::vec(-10.0f64..10.0, m),
            prop::collection::vec(-10.0f64..10.0, m),
            0.05f64..0.95,
        )
            .prop_map(move |(u, v, c)| (u, v, c / m as f64))
    })
}

proptest! {
    /// Replaying any stream with identical configuration reproduces the
    /// point list bit-exactly.
    #[test]
    fn point_streams_replay_bit_exactly(
        kind in 0u8..3,
        seed in any::<u64>(),
        dim in 1usize..=3,
        count in 1usize..=96,
    ) {
        let domain = HyperRectangle::unit_cube(dim);
        let a = generate_points(&mut stream_of(kind, seed, dim), count, &domain).unwrap();
        let b = generate_points(&mut stream_of(kind, seed, dim), count, &domain).unwrap();
        prop_assert_eq!(a, b);
    }

    /// The δ-floored simplex projection lands in the feasible set, is
    /// idempotent there, and contracts distances (a metric projection onto
    /// a convex set).
    #[test]
    fn simplex_projection_properties((u, v, delta) in simplex_instances()) {
        let pu = project_onto_simplex(&u, delta).unwrap();
        let pv = project_onto_simplex(&v, delta).unwrap();

        let sum: f64 = pu.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(pu.iter().all(|&p| p >= delta - 1e-12));

        let again = project_onto_simplex(&pu, delta).unwrap();
        for (a, b) in again.iter().zip(&pu) {
            prop_assert!((a - b).abs() <= 1e-12);
        }

        let moved: f64 = pu.iter().zip(&pv).map(|(a, b)| (a - b).powi(2)).sum();
        let original: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!(moved.sqrt() <= original.sqrt() + 1e-12);
    }

    /// Integer counts honor the budget exactly and give every supported
    /// point at least one evaluation.
    #[test]
    fn integerized_counts_sum_to_the_budget(
        sigma2 in prop::collection::vec(0.1f64..10.0, 3..=12),
        slack in 0usize..500,
    ) {
        let m = sigma2.len();
        let design = toy_design(m);
        let noise = NoiseProfile::new(sigma2, NoiseSource::Exact).unwrap();
        let alloc = neyman_allocation(&design, &noise).unwrap();
        let l = m + slack;
        let counts = integerize(&alloc, l).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), l);
        prop_assert!(counts.iter().all(|&c| c >= 1));
    }

    /// Tensor quadrature integrates polynomials of degree ≤ 2·level−1
    /// exactly (up to arithmetic).
    #[test]
    fn quadrature_is_exact_on_polynomials(
        level in 2usize..=6,
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..=8),
    ) {
        let degree_cap = 2 * level - 1;
        let coeffs = &coeffs[..coeffs.len().min(degree_cap + 1)];
        let f = |x: &[f64]| -> f64 {
            coeffs.iter().rev().fold(0.0, |acc, &c| acc * x[0] + c)
        };
        // Uniform probability measure on [-1,1]: odd monomials vanish,
        // even x^k integrates to 1/(k+1).
        let exact: f64 = coeffs
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == 0)
            .map(|(k, &c)| c / (k + 1) as f64)
            .sum();
        let measure = ProductMeasure::uniform(HyperRectangle::symmetric_cube(1));
        let quad = quadrature_integral(f, &measure, level).unwrap();
        prop_assert!((quad - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }
}

/// Anchored box-counting estimate of the star discrepancy on [0,1]^d.
fn star_discrepancy(points: &[Vec<f64>], levels: usize) -> f64 {
    let d = points[0].len();
    let mut anchors = vec![0usize; d];
    let mut worst: f64 = 0.0;
    loop {
        let corner: Vec<f64> = anchors.iter().map(|&a| (a + 1) as f64 / levels as f64).collect();
        let volume: f64 = corner.iter().product();
        let inside = points
            .iter()
            .filter(|p| p.iter().zip(&corner).all(|(x, c)| x < c))
            .count() as f64;
        worst = worst.max((inside / points.len() as f64 - volume).abs());
        // Odometer over the anchor grid.
        let mut j = 0;
        loop {
            if j == d {
                return worst;
            }
            anchors[j] += 1;
            if anchors[j] < levels {
                break;
            }
            anchors[j] = 0;
            j += 1;
        }
    }
}

#[test]
fn low_discrepancy_streams_beat_iid_star_discrepancy() {
    for dim in [1usize, 2, 3] {
        let domain = HyperRectangle::unit_cube(dim);
        let count = 1024;
        let levels = [64, 24, 12][dim - 1];
        let disc = |kind: u8| -> f64 {
            let pts = generate_points(&mut stream_of(kind, 1234, dim), count, &domain).unwrap();
            star_discrepancy(&pts, levels)
        };
        let (iid, halton, sobol) = (disc(0), disc(1), disc(2));
        assert!(
            halton < iid && sobol < iid,
            "d = {dim}: iid {iid:.4}, halton {halton:.4}, sobol {sobol:.4}"
        );
    }
}

#[test]
fn neyman_objective_approaches_its_continuous_limit() {
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(1), 2).unwrap();
    let profile = christoffel(&basis);
    let sigma = |x: &[f64]| 1.5 + 0.5 * (std::f64::consts::PI * x[0]).sin();

    let measure = ProductMeasure::uniform(HyperRectangle::symmetric_cube(1));
    let l1 = quadrature_integral(
        |x| sigma(x) * profile.phi(x).sqrt(),
        &measure,
        64,
    )
    .unwrap();
    let target = l1 * l1;

    let halton = PointStream::halton(&[2]).unwrap();
    let mut errors = Vec::new();
    for m in [1_000usize, 10_000] {
        let design = sample_design(&basis, m, None, &halton).unwrap();
        let sigma2: Vec<f64> = design.points().iter().map(|x| sigma(x).powi(2)).collect();
        let noise = NoiseProfile::new(sigma2, NoiseSource::Exact).unwrap();
        let alloc = neyman_allocation(&design, &noise).unwrap();
        let lg = objective_g(alloc.p(), &design, &noise, 1);
        errors.push((lg - target).abs());
    }
    assert!(
        errors[1] < errors[0],
        "L·G error should shrink with m: {errors:?} (target {target:.6})"
    );
    assert!(errors[1] / target < 0.05, "errors {errors:?}, target {target:.6}");
}

#[test]
fn evaluation_replays_match_the_stated_covariance() {
    let design = toy_design(12);
    let f = |x: &[f64]| (1.3 * x[0]).sin();
    let sig = |x: &[f64]| 0.6 + 0.4 * x[0] * x[0];
    let oracle = NoisyOracle::new(move |x, rng| f(x) + sig(x) * standard_normal(rng));
    let sigma2: Vec<f64> = design.points().iter().map(|x| sig(x).powi(2)).collect();
    let noise = NoiseProfile::new(sigma2.clone(), NoiseSource::Exact).unwrap();
    let alloc = uniform_allocation(&design, &noise).unwrap();
    let l = 120; // 10 evaluations per point

    let replays = 1000;
    let mut mean = vec![0.0f64; 12];
    let mut second = vec![0.0f64; 12];
    for r in 0..replays {
        let eval = evaluate_budget(&oracle, &design, &alloc, l, r as u64).unwrap();
        assert_eq!(eval.counts(), &[10; 12]);
        for (i, &v) in eval.means().iter().enumerate() {
            mean[i] += v;
            second[i] += v * v;
        }
    }
    for i in 0..12 {
        let x = &design.points()[i];
        mean[i] /= replays as f64;
        let var = second[i] / replays as f64 - mean[i] * mean[i];
        let predicted = sigma2[i] / 10.0;
        // Mean within 4 standard errors of f(xᵢ); variance within 25%.
        let se = (predicted / replays as f64).sqrt();
        assert!(
            (mean[i] - f(x)).abs() <= 4.0 * se,
            "site {i}: mean {} vs {} (se {se:.2e})",
            mean[i],
            f(x)
        );
        assert!(
            (var / predicted - 1.0).abs() <= 0.25,
            "site {i}: var {var:.4e} vs predicted {predicted:.4e}"
        );
    }
}

#[test]
fn quoted_prices_are_nonincreasing_in_strike() {
    let model = BSModel::standard(0.3, 0.1, -0.3).unwrap();
    let strikes: Vec<f64> = (0..6).map(|k| k as f64).collect();
    let (quotes, se) =
        synth_market_with_se(&model, &[0.25, 1.0], &strikes, 20_000, 99).unwrap();
    for i in 0..2 {
        for j in 0..strikes.len() - 1 {
            let slackness = 4.0 * (se[(i, j)] + se[(i, j + 1)]);
            assert!(
                quotes.price(i, j + 1) <= quotes.price(i, j) + slackness,
                "T index {i}: price rose from K={j} to K={}",
                j + 1
            );
        }
    }
}

#[test]
fn weighted_design_rows_have_unit_mean_square() {
    // For any v ∈ Vₙ, (1/m)·Σᵢ w(xᵢ)v(xᵢ)² estimates ‖v‖²; with v running
    // over an orthonormal basis the trace of the weighted Gram is n, so the
    // mean squared row norm of W^{1/2}V must concentrate near n/m.
    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(2), 3).unwrap();
    let stream = PointStream::halton(&[2, 3]).unwrap();
    let design = sample_design(&basis, 2_000, None, &stream).unwrap();
    let w = design.weighted_matrix();
    let trace: f64 = (0..design.m()).map(|i| w.row(i).norm_squared()).sum();
    let n = basis.n() as f64;
    assert!(
        (trace - n).abs() / n < 0.05,
        "tr(VᵀWV) = {trace:.4} should approximate n = {n}"
    );
}

/// The content hash the harness couples designs with must be order-aware.
#[test]
fn design_hash_distinguishes_point_order() {
    let a = toy_design(8);
    let basis: Arc<_> = a.basis().clone();
    let mut reversed: Vec<Vec<f64>> = a.points().to_vec();
    reversed.reverse();
    let b = SampleDesign::assemble(basis, reversed, vec![1.0; 8], None, "rev".into()).unwrap();
    assert_ne!(a.content_hash(), b.content_hash());
}
