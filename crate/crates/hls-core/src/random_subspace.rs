//! Data-driven subspaces spanned by random field realizations.
//!
//! When the target is only known as a conditional mean `f(x) = E[g(x, Z)]`,
//! realizations `gᵢ = g(·, Zᵢ)` of the field are themselves natural basis
//! candidates: `f` is the population average of the family, so averages of
//! enough realizations land close to it, and the span `Vₙ` typically
//! approximates `f` far faster than the `n^{-1/2}` averaging rate when the
//! field's covariance spectrum decays. This module draws such snapshot
//! families, discretizes them into orthonormal bases, and provides the two
//! diagnostics that quantify those claims: best-approximation error curves
//! and the empirical covariance spectrum with its tail sums.

use crate::allocation::{NoiseProfile, NoiseSource};
use crate::basis::{discretize_basis, BasisSet, ScalarFn};
use crate::constraint::ConvexCone;
use crate::decoder::{Approximant, Pipeline};
use crate::domain::mix_seed;
use crate::error::{HlsError, Result};
use crate::table::{fmt_f64, write_text_csv};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::path::Path;
use std::sync::Arc;

/// A distribution over functions on Ω, sampled through an explicit RNG so
/// draws are replayable.
#[derive(Clone)]
pub struct RandomFieldGenerator {
    sampler: Arc<dyn Fn(&mut ChaCha12Rng) -> ScalarFn + Send + Sync>,
    mean_is_target: bool,
}

impl RandomFieldGenerator {
    /// A field whose pointwise mean is the learning target (the usual case).
    pub fn new(sampler: impl Fn(&mut ChaCha12Rng) -> ScalarFn + Send + Sync + 'static) -> Self {
        RandomFieldGenerator { sampler: Arc::new(sampler), mean_is_target: true }
    }

    /// Documents that the family is used only as a basis source, with no
    /// claim that its mean equals the target.
    pub fn without_mean_interpretation(mut self) -> Self {
        self.mean_is_target = false;
        self
    }

    pub fn mean_is_target(&self) -> bool {
        self.mean_is_target
    }

    pub fn draw(&self, rng: &mut ChaCha12Rng) -> ScalarFn {
        (self.sampler)(rng)
    }

    fn draw_family(&self, n: usize, seed: u64) -> Vec<ScalarFn> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

/// Draws `n` field realizations, discretizes them on `grid` (uniform grid
/// measure), and returns the orthonormal basis, the cone of nonnegative
/// snapshot combinations, and the raw snapshots themselves (kept so their
/// spread can later serve as a free conditional-variance estimate).
///
/// A rank-deficient draw — snapshots that fail to span an `n`-dimensional
/// space on the grid — is regenerated with fresh randomness up to three
/// times before the failure is reported.
pub fn build_subspace(
    gen: &RandomFieldGenerator,
    n: usize,
    grid: &[Vec<f64>],
    seed: u64,
) -> Result<(Arc<BasisSet>, ConvexCone, Vec<ScalarFn>)> {
    if grid.len() < n {
        return Err(HlsError::InvalidInput(format!(
            "grid of {} points cannot carry {n} independent snapshots",
            grid.len()
        )));
    }
    let mut last_err = None;
    for attempt in 0..4u64 {
        let snapshots = gen.draw_family(n, mix_seed(seed, attempt));
        match discretize_basis(snapshots.clone(), grid.to_vec(), None) {
            Ok(basis) => {
                let cone = ConvexCone::from_grid_basis(basis.grid().unwrap())?;
                return Ok((basis, cone, snapshots));
            }
            Err(e @ HlsError::RankDeficient(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(HlsError::RankDeficient(format!(
        "field produced rank-deficient snapshot families in 4 attempts: {}",
        last_err.expect("loop stored an error")
    )))
}

/// Pointwise variance of a snapshot family across its members (divisor
/// n − 1, floored at 1e-12), exposing the draws already paid for as a noise
/// profile at arbitrary evaluation points.
pub fn reused_snapshot_variance(
    snapshots: &[ScalarFn],
    points: &[Vec<f64>],
) -> Result<NoiseProfile> {
    let n = snapshots.len();
    if n < 2 {
        return Err(HlsError::InvalidInput(format!(
            "variance from reused snapshots needs at least 2 of them, got {n}"
        )));
    }
    let sigma2: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let vals: Vec<f64> = snapshots.iter().map(|s| s(x)).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let ss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).max(1e-12)
        })
        .collect();
    NoiseProfile::new(sigma2, NoiseSource::ReusedSnapshots)
}

/// The plain Monte Carlo average of the first `k` snapshots, expressed in
/// the orthonormal coordinates of `basis`: coefficient vector
/// `(1/k, …, 1/k, 0, …, 0)` over the raw snapshots, mapped through the
/// change of basis.
pub fn mc_average_baseline(basis: &Arc<BasisSet>, k: usize) -> Result<Approximant> {
    let grid = basis.grid().ok_or_else(|| {
        HlsError::InvalidInput("averaging baseline needs a snapshot-built grid basis".into())
    })?;
    let n = basis.n();
    if k == 0 || k > n {
        return Err(HlsError::InvalidInput(format!(
            "average over k = {k} snapshots outside 1..={n}"
        )));
    }
    let mut beta = DVector::zeros(n);
    for i in 0..k {
        beta[i] = 1.0 / k as f64;
    }
    Approximant::new(grid.to_ortho() * beta, Arc::clone(basis), Pipeline::Avg)
}

/// The plain function-space average `(1/k)Σ_{i<k} gᵢ` of arbitrary
/// snapshots, independent of any basis (the averaging baseline exists even
/// for families too degenerate to orthonormalize).
pub fn snapshot_average(snapshots: &[ScalarFn], k: usize) -> Result<ScalarFn> {
    if k == 0 || k > snapshots.len() {
        return Err(HlsError::InvalidInput(format!(
            "average over k = {k} snapshots outside 1..={}",
            snapshots.len()
        )));
    }
    let head: Vec<ScalarFn> = snapshots[..k].iter().map(Arc::clone).collect();
    Ok(Arc::new(move |x: &[f64]| {
        head.iter().map(|s| s(x)).sum::<f64>() / k as f64
    }))
}

/// One row of a subspace approximation-error curve.
#[derive(Clone, Debug)]
pub struct ErrorCurvePoint {
    pub n: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub min_error: f64,
    pub max_error: f64,
}

/// Per-replicate best-approximation distances `min_{v∈Vₙ}‖f − v‖_{L²}`
/// under the grid measure: `result[j][rep]` is the error at `n_values[j]`
/// in replicate `rep`. Within a replicate the subspaces are nested (each
/// `n` takes a prefix of one draw of `max(n_values)` snapshots), matching
/// how a growing basis would actually be built.
pub fn subspace_error_samples(
    gen: &RandomFieldGenerator,
    f_reference: &ScalarFn,
    n_values: &[usize],
    grid: &[Vec<f64>],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_values.is_empty() || replicates == 0 {
        return Err(HlsError::InvalidInput(
            "need at least one subspace size and one replicate".into(),
        ));
    }
    let n_max = *n_values.iter().max().unwrap();
    if n_max == 0 || grid.len() < n_max {
        return Err(HlsError::InvalidInput(format!(
            "subspace sizes must lie in 1..={} (grid size)",
            grid.len()
        )));
    }
    let q = grid.len();
    let sqrt_w = (1.0 / q as f64).sqrt();
    let f_vals = DVector::from_iterator(q, grid.iter().map(|x| f_reference(x) * sqrt_w));
    if f_vals.iter().any(|v| !v.is_finite()) {
        return Err(HlsError::NonFinite("reference values contain non-finite entries".into()));
    }

    // errors[rep][j] = distance at n_values[j].
    let mut per_n: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); n_values.len()];
    for rep in 0..replicates {
        let snapshots = gen.draw_family(n_max, mix_seed(seed, rep as u64));
        let mut cols: Vec<DVector<f64>> = snapshots
            .par_iter()
            .map(|s| DVector::from_iterator(q, grid.iter().map(|x| s(x) * sqrt_w)))
            .collect();
        if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(HlsError::NonFinite("snapshot values contain non-finite entries".into()));
        }
        // Incremental modified Gram–Schmidt with one reorthogonalization
        // pass: after j columns the residual of f against the current
        // orthonormal set is the best-approximation distance for V_j.
        let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(n_max);
        let mut resid = f_vals.clone();
        let mut next = 0usize;
        for (j, col) in cols.iter_mut().enumerate() {
            let orig = col.norm();
            for pass in 0..2 {
                let _ = pass;
                for qv in &ortho {
                    let c = qv.dot(col);
                    col.axpy(-c, qv, 1.0);
                }
            }
            // Columns already inside the current span enlarge nothing.
            if col.norm() > 1e-12 * orig.max(1e-300) {
                let qv = col.clone() / col.norm();
                let c = qv.dot(&resid);
                resid.axpy(-c, &qv, 1.0);
                ortho.push(qv);
            }
            while next < n_values.len() && n_values[next] == j + 1 {
                per_n[next].push(resid.norm());
                next += 1;
            }
        }
        if next != n_values.len() {
            return Err(HlsError::InvalidInput(
                "subspace sizes must be strictly increasing".into(),
            ));
        }
    }
    Ok(per_n)
}

/// Summary statistics of [`subspace_error_samples`] per subspace size.
pub fn subspace_error_curve(
    gen: &RandomFieldGenerator,
    f_reference: &ScalarFn,
    n_values: &[usize],
    grid: &[Vec<f64>],
    replicates: usize,
    seed: u64,
) -> Result<Vec<ErrorCurvePoint>> {
    let per_n = subspace_error_samples(gen, f_reference, n_values, grid, replicates, seed)?;
    let mut out = Vec::with_capacity(n_values.len());
    for (j, &n) in n_values.iter().enumerate() {
        let errs = &per_n[j];
        let mean = errs.iter().sum::<f64>() / replicates as f64;
        let var = if replicates > 1 {
            errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (replicates - 1) as f64
        } else {
            0.0
        };
        let min = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push(ErrorCurvePoint {
            n,
            mean_error: mean,
            std_error: var.sqrt(),
            min_error: min,
            max_error: max,
        });
    }
    Ok(out)
}

/// Eigenvalues of the empirical covariance operator of a snapshot family
/// and their tail sums.
#[derive(Clone, Debug)]
pub struct SpectrumDiagnostic {
    eigenvalues: Vec<f64>,
    tail_sums: Vec<f64>,
}

impl SpectrumDiagnostic {
    /// Nonincreasing, clipped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `tail_sums[s] = Σ_{i ≥ s} λ̂ᵢ` (zero-based), nonincreasing with
    /// `tail_sums[0]` the full trace.
    pub fn tail_sums(&self) -> &[f64] {
        &self.tail_sums
    }

    pub fn trace(&self) -> f64 {
        self.tail_sums.first().copied().unwrap_or(0.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .eigenvalues
            .iter()
            .zip(&self.tail_sums)
            .enumerate()
            .map(|(i, (ev, ts))| vec![i.to_string(), fmt_f64(*ev), fmt_f64(*ts)])
            .collect();
        write_text_csv(path, "index,eigenvalue,tail_sum", &rows)
    }
}

/// Spectrum of the centered snapshot Gram matrix under the uniform grid
/// measure, scaled by `1/(n−1)`: the empirical estimate of the field's
/// covariance eigenvalues. Centering uses the snapshot sample mean, the
/// natural estimate of the target that the covariance kernel subtracts.
/// Tiny negative eigenvalues from roundoff (within −1e-10 of zero,
/// relatively) are clipped to zero.
pub fn empirical_kernel_spectrum(
    snapshots: &[ScalarFn],
    grid: &[Vec<f64>],
) -> Result<SpectrumDiagnostic> {
    let n = snapshots.len();
    if n < 2 {
        return Err(HlsError::InvalidInput(format!(
            "spectrum needs at least 2 snapshots, got {n}"
        )));
    }
    if grid.is_empty() {
        return Err(HlsError::InvalidInput("empty grid".into()));
    }
    let q = grid.len();
    // Centered values, grid-partition parallel: row q holds gᵢ(x_q) − ḡ(x_q).
    let rows: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|x| {
            let mut vals: Vec<f64> = snapshots.iter().map(|s| s(x)).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            for v in &mut vals {
                *v -= mean;
            }
            vals
        })
        .collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HlsError::NonFinite("snapshot values contain non-finite entries".into()));
    }
    let mut gram: DMatrix<f64> = DMatrix::zeros(n, n);
    for row in &rows {
        for i in 0..n {
            for j in i..n {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    let scale = 1.0 / (q as f64 * (n - 1) as f64);
    for i in 0..n {
        for j in i..n {
            let v = gram[(i, j)] * scale;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let mut eigenvalues: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    for ev in &mut eigenvalues {
        if *ev < 0.0 {
            if *ev < -1e-10 * top.max(1.0) {
                return Err(HlsError::Numerical(format!(
                    "covariance eigenvalue {ev:.3e} is too negative for roundoff"
                )));
            }
            *ev = 0.0;
        }
    }
    let mut tail_sums = vec![0.0; eigenvalues.len()];
    let mut acc = 0.0;
    for i in (0..eigenvalues.len()).rev() {
        acc += eigenvalues[i];
        tail_sums[i] = acc;
    }
    Ok(SpectrumDiagnostic { eigenvalues, tail_sums })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::legendre_normalized;
    use crate::domain::standard_normal;
    use approx::assert_abs_diff_eq;

    fn unit_grid(q: usize) -> Vec<Vec<f64>> {
        (0..q).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / q as f64]).collect()
    }

    /// Single normalized Legendre value of exact degree k.
    fn leg(k: usize, t: f64) -> f64 {
        legendre_normalized(k, t)[k]
    }

    /// f + Σ_j √λ_j ξ_j P_j with geometric λ and normalized Legendre P_j;
    /// ‖σ‖²_{L²} = Σ λ_j = 1 by construction.
    fn geometric_field(rho: f64, terms: usize) -> (RandomFieldGenerator, ScalarFn) {
        let f: ScalarFn = Arc::new(|x: &[f64]| 1.0 + x[0]);
        let norm: f64 = (1..=terms).map(|j| rho.powi(j as i32)).sum();
        let lambdas: Vec<f64> = (1..=terms).map(|j| rho.powi(j as i32) / norm).collect();
        let f2 = Arc::clone(&f);
        let gen = RandomFieldGenerator::new(move |rng| {
            let xi: Vec<f64> =
                lambdas.iter().map(|l| l.sqrt() * standard_normal(rng)).collect();
            let f3 = Arc::clone(&f2);
            Arc::new(move |x: &[f64]| {
                let mut v = f3(x);
                for (j, c) in xi.iter().enumerate() {
                    v += c * leg(j + 1, x[0]);
                }
                v
            })
        });
        (gen, f)
    }

    #[test]
    fn degenerate_fields_are_rejected_after_retries() {
        let grid = unit_grid(32);
        // Deterministic field: every snapshot is the same function.
        let det = RandomFieldGenerator::new(|_| Arc::new(|x: &[f64]| x[0].cos()) as ScalarFn);
        let err = build_subspace(&det, 2, &grid, 7).err().unwrap();
        assert!(matches!(err, HlsError::RankDeficient(_)), "{err}");
        assert!(err.to_string().contains("4 attempts"), "{err}");
        // One-dimensional span: g(x, Z) = Z·x.
        let ray = RandomFieldGenerator::new(|rng| {
            let z = standard_normal(rng);
            Arc::new(move |x: &[f64]| z * x[0]) as ScalarFn
        });
        assert!(build_subspace(&ray, 2, &grid, 7).is_err());
        assert!(build_subspace(&ray, 1, &grid, 7).is_ok());
    }

    #[test]
    fn built_subspace_exposes_consistent_pieces() {
        let (gen, _) = geometric_field(0.7, 10);
        let grid = unit_grid(128);
        let (basis, cone, snaps) = build_subspace(&gen, 6, &grid, 3).unwrap();
        assert_eq!(basis.n(), 6);
        assert_eq!(cone.num_generators(), 6);
        assert_eq!(snaps.len(), 6);
        // The basis really carries the snapshots it claims: generator j in
        // orthonormal coordinates evaluates back to snapshot j on the grid.
        let gb = basis.grid().unwrap();
        for j in 0..6 {
            let coeffs = gb.to_ortho().column(j).into_owned();
            for (qi, x) in grid.iter().enumerate().step_by(31) {
                let via_basis = gb.ortho_row(qi).dot(&coeffs);
                assert_abs_diff_eq!(via_basis, snaps[j](x), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn average_baseline_matches_snapshot_means() {
        let (gen, _) = geometric_field(0.6, 8);
        let grid = unit_grid(96);
        let (basis, _, snaps) = build_subspace(&gen, 5, &grid, 11).unwrap();
        // k = 1: the first snapshot itself.
        let a1 = mc_average_baseline(&basis, 1).unwrap();
        assert_eq!(a1.pipeline(), Pipeline::Avg);
        for x in grid.iter().step_by(17) {
            assert_abs_diff_eq!(a1.evaluate(x), snaps[0](x), epsilon = 1e-9);
        }
        // k = n: the full average, checked off-grid too (snapshots are
        // globally evaluable).
        let a5 = mc_average_baseline(&basis, 5).unwrap();
        for x in [[-0.513], [0.0314], [0.9777]] {
            let direct: f64 = snaps.iter().map(|s| s(&x)).sum::<f64>() / 5.0;
            assert_abs_diff_eq!(a5.evaluate(&x), direct, epsilon = 1e-9);
        }
        assert!(mc_average_baseline(&basis, 0).is_err());
        assert!(mc_average_baseline(&basis, 6).is_err());
    }

    #[test]
    fn function_average_cancels_antipodal_snapshots() {
        let h: ScalarFn = Arc::new(|x: &[f64]| (2.0 * x[0]).sin() + 0.3);
        let h2 = Arc::clone(&h);
        let snaps: Vec<ScalarFn> = vec![Arc::clone(&h), Arc::new(move |x| -h2(x))];
        let avg = snapshot_average(&snaps, 2).unwrap();
        for x in [[-0.8], [0.1], [0.64]] {
            assert_abs_diff_eq!(avg(&x), 0.0, epsilon = 1e-15);
        }
        let first = snapshot_average(&snaps, 1).unwrap();
        assert_abs_diff_eq!(first(&[0.3]), h(&[0.3]), epsilon = 1e-15);
    }

    #[test]
    fn error_curve_hits_zero_for_representable_targets() {
        // Rank-3 field with f in its span: g = Σ (1 + ξ_j)·ψ_j, so every
        // snapshot lives in span{ψ} and f = Σψ_j does too.
        let gen = RandomFieldGenerator::new(|rng| {
            let z: Vec<f64> = (0..3).map(|_| 1.0 + standard_normal(rng)).collect();
            Arc::new(move |x: &[f64]| {
                z[0] * leg(0, x[0])
                    + z[1] * leg(2, x[0])
                    + z[2] * leg(5, x[0])
            }) as ScalarFn
        });
        let f: ScalarFn = Arc::new(|x: &[f64]| {
            leg(0, x[0]) + leg(2, x[0])
                + leg(5, x[0])
        });
        let grid = unit_grid(64);
        let curve = subspace_error_curve(&gen, &f, &[1, 3, 5], &grid, 8, 21).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve[0].mean_error > 1e-4, "n=1 cannot be exact");
        assert!(curve[1].max_error <= 1e-8, "n=3 spans the field: {}", curve[1].max_error);
        assert!(curve[2].max_error <= 1e-8);
        // Zero-variance field: error 0 already at n = 1.
        let f2 = Arc::clone(&f);
        let det = RandomFieldGenerator::new(move |_| Arc::clone(&f2));
        let curve = subspace_error_curve(&det, &f, &[1], &grid, 2, 0).unwrap();
        assert!(curve[0].max_error <= 1e-10);
    }

    #[test]
    fn error_curve_decays_much_faster_than_averaging() {
        let (gen, f) = geometric_field(0.6, 40);
        let grid = unit_grid(256);
        let ns = [2usize, 4, 8, 16, 32];
        let curve = subspace_error_curve(&gen, &f, &ns, &grid, 5, 5).unwrap();
        for w in curve.windows(2) {
            assert!(
                w[1].mean_error < w[0].mean_error,
                "curve not decreasing: {} -> {}",
                w[0].mean_error,
                w[1].mean_error
            );
        }
        // Log-log slope: subspace projection must beat the n^{-1/2}
        // Monte Carlo averaging rate by a wide margin.
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = curve.iter().map(|p| p.mean_error.max(1e-300).ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(slope < -1.2, "log-log slope {slope} not clearly faster than -0.5");
    }

    #[test]
    fn subsampled_averages_certify_epsilon_accuracy() {
        // With ‖σ‖² = 1, ε = 0.5 needs k = ⌈2ε⁻²⌉ = 8 averaged draws and
        // n > 1.5·ln(10)·k ≈ 27.6 snapshots for 90% confidence; the
        // projection error can only be smaller than the best block average.
        let (gen, f) = geometric_field(0.9, 60);
        let grid = unit_grid(256);
        let eps = 0.5;
        let samples = subspace_error_samples(&gen, &f, &[28], &grid, 50, 99).unwrap();
        let successes = samples[0].iter().filter(|&&e| e < eps).count();
        assert!(successes >= 45, "{successes}/50 replicates below ε");
    }

    #[test]
    fn spectrum_recovers_rank_and_trace() {
        // Two independent components: λ̂₃.. ≈ 0.
        let gen = RandomFieldGenerator::new(|rng| {
            let a = standard_normal(rng);
            let b = standard_normal(rng);
            Arc::new(move |x: &[f64]| {
                5.0 + a * leg(1, x[0]) + b * leg(3, x[0])
            }) as ScalarFn
        });
        let grid = unit_grid(128);
        let snaps = gen.draw_family(40, 13);
        let spec = empirical_kernel_spectrum(&snaps, &grid).unwrap();
        assert_eq!(spec.eigenvalues().len(), 40);
        assert!(spec.eigenvalues()[2] <= 1e-8 * spec.eigenvalues()[0]);
        for w in spec.tail_sums().windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert_abs_diff_eq!(spec.tail_sums()[0], spec.eigenvalues().iter().sum(), epsilon = 1e-12);
        // Trace identity: Σλ̂ estimates E‖g − f‖² = ‖σ‖² = 1 for the
        // geometric field; compare against a direct MC estimate.
        let (gen, f) = geometric_field(0.8, 30);
        let snaps = gen.draw_family(200, 29);
        let spec = empirical_kernel_spectrum(&snaps, &grid).unwrap();
        let mc: f64 = {
            let fresh = gen.draw_family(400, 31);
            let q = grid.len() as f64;
            fresh
                .iter()
                .map(|g| {
                    grid.iter()
                        .map(|x| {
                            let d = g(x) - f(x);
                            d * d
                        })
                        .sum::<f64>()
                        / q
                })
                .sum::<f64>()
                / 400.0
        };
        let ratio = spec.trace() / mc;
        assert!((0.8..1.25).contains(&ratio), "trace {} vs MC {}", spec.trace(), mc);
    }

    #[test]
    fn spectrum_of_constant_field_is_zero() {
        let c: ScalarFn = Arc::new(|_: &[f64]| 2.5);
        let snaps: Vec<ScalarFn> = (0..5).map(|_| Arc::clone(&c)).collect();
        let spec = empirical_kernel_spectrum(&snaps, &unit_grid(16)).unwrap();
        assert!(spec.eigenvalues().iter().all(|&l| l == 0.0));
        assert_eq!(spec.trace(), 0.0);
        assert!(empirical_kernel_spectrum(&snaps[..1], &unit_grid(16)).is_err());
    }

    #[test]
    fn reused_snapshot_variance_matches_family_spread() {
        let (gen, _) = geometric_field(0.5, 6);
        let snaps = gen.draw_family(50, 17);
        let pts = unit_grid(9);
        let profile = reused_snapshot_variance(&snaps, &pts).unwrap();
        assert_eq!(profile.len(), 9);
        assert!(matches!(profile.source(), NoiseSource::ReusedSnapshots));
        // Hand-check one point.
        let x = &pts[4];
        let vals: Vec<f64> = snaps.iter().map(|s| s(x)).collect();
        let mean = vals.iter().sum::<f64>() / 50.0;
        let expect = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 49.0;
        assert_abs_diff_eq!(profile.sigma2()[4], expect.max(1e-12), epsilon = 1e-12);
        assert!(reused_snapshot_variance(&snaps[..1], &pts).is_err());
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let (gen, _) = geometric_field(0.7, 5);
        let snaps = gen.draw_family(10, 3);
        let spec = empirical_kernel_spectrum(&snaps, &unit_grid(32)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.csv");
        spec.save(&path).unwrap();
        let header = crate::table::read_header(&path).unwrap();
        assert_eq!(header, vec!["index", "eigenvalue", "tail_sum"]);
        let rows = crate::table::read_csv(&path).unwrap();
        assert_eq!(rows.len(), 10);
        assert_abs_diff_eq!(rows[0][1], spec.eigenvalues()[0], epsilon = 0.0);
        assert_abs_diff_eq!(rows[3][2], spec.tail_sums()[3], epsilon = 0.0);
    }
}
