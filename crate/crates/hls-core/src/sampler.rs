//! Design-point sampling from the Christoffel-induced measure.
//!
//! Sampling from `dν = (Φ_n/n)·dμ` equalizes the leverage of the design
//! rows, which is what makes `m ≈ n·log n` points enough for a stable least
//! squares. Two paths: tensor-Legendre bases factorize, so each coordinate
//! is drawn by inverting a univariate CDF; grid bases sample grid indices by
//! leverage score. `boost` wraps either path and retries until the weighted
//! design matrix is well conditioned.

use crate::basis::{phi1, BasisSet};
use crate::domain::{gauss_legendre, PointStream};
use crate::error::{HlsError, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// An m-point sampling design with Christoffel weights and the scaled design
/// matrix `V[i,j] = v_j(x_i)/√m`. The weighted matrix `W^{1/2}V` and its
/// singular values are precomputed; its conditioning decides whether the
/// design embeds the subspace.
#[derive(Clone)]
pub struct SampleDesign {
    basis: Arc<BasisSet>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    grid_indices: Option<Vec<usize>>,
    v: DMatrix<f64>,
    weighted: DMatrix<f64>,
    singular_values: Vec<f64>,
    provenance: String,
    trials_run: usize,
    threshold_missed: bool,
}

impl std::fmt::Debug for SampleDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampleDesign")
            .field("m", &self.m())
            .field("n", &self.n())
            .field("cond", &self.cond())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl SampleDesign {
    /// Assembles a design from explicit points and weights, computing the
    /// design matrices and their singular values.
    pub fn assemble(
        basis: Arc<BasisSet>,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        grid_indices: Option<Vec<usize>>,
        provenance: String,
    ) -> Result<Self> {
        let m = points.len();
        let n = basis.n();
        if m < n {
            return Err(HlsError::InvalidInput(format!(
                "m = {m} design points cannot carry an n = {n} dimensional basis"
            )));
        }
        if weights.len() != m {
            return Err(HlsError::DimensionMismatch(format!(
                "{} weights for {m} points",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(HlsError::InvalidInput(format!(
                "sampling weights must be positive and finite, got {w}"
            )));
        }
        let scale = 1.0 / (m as f64).sqrt();
        let mut v = DMatrix::zeros(m, n);
        for (i, x) in points.iter().enumerate() {
            let row = basis.evaluate(x);
            for j in 0..n {
                v[(i, j)] = row[j] * scale;
            }
        }
        let mut weighted = v.clone();
        for i in 0..m {
            let s = weights[i].sqrt();
            for j in 0..n {
                weighted[(i, j)] *= s;
            }
        }
        let mut singular_values: Vec<f64> =
            weighted.clone().svd(false, false).singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(SampleDesign {
            basis,
            points,
            weights,
            grid_indices,
            v,
            weighted,
            singular_values,
            provenance,
            trials_run: 1,
            threshold_missed: false,
        })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Christoffel values at the design points, recovered from `w = n/Φ`.
    pub fn phi(&self, i: usize) -> f64 {
        self.n() as f64 / self.weights[i]
    }

    /// Grid indices of the points when the design was drawn from a grid
    /// basis; lets callers reuse per-grid-point data (e.g. snapshot
    /// variances) without re-evaluating anything.
    pub fn grid_indices(&self) -> Option<&[usize]> {
        self.grid_indices.as_deref()
    }

    /// The scaled design matrix `V` (entries `v_j(x_i)/√m`).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// The weighted design matrix `W^{1/2}V`.
    pub fn weighted_matrix(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    /// Singular values of `W^{1/2}V`, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Condition number of `W^{1/2}V`; `+∞` if numerically singular.
    pub fn cond(&self) -> f64 {
        let smin = *self.singular_values.last().unwrap();
        if smin <= 0.0 {
            f64::INFINITY
        } else {
            self.singular_values[0] / smin
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Number of boosting trials behind this design (1 when unboosted).
    pub fn trials_run(&self) -> usize {
        self.trials_run
    }

    /// Set when boosting exhausted its trials without meeting the condition
    /// threshold and fell back to the best design seen.
    pub fn threshold_missed(&self) -> bool {
        self.threshold_missed
    }

    /// Order-sensitive content hash over points and weights; two pipeline
    /// runs sharing a design stage must agree on this value.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bits: u64| {
            h ^= bits;
            h = h.wrapping_mul(0x100000001b3);
        };
        for p in &self.points {
            for &c in p {
                eat(c.to_bits());
            }
        }
        for &w in &self.weights {
            eat(w.to_bits());
        }
        h
    }

    /// Writes the design as CSV (`x1..xd,weight`) plus a sidecar recording
    /// singular values and the condition number.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        header.push("weight".into());
        let rows: Vec<Vec<f64>> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                let mut r = p.clone();
                r.push(w);
                r
            })
            .collect();
        crate::table::write_csv(path, &header.join(","), rows.iter().map(|r| r.as_slice()))?;
        let sidecar = path.with_extension("sv.csv");
        let sv_rows: Vec<Vec<f64>> =
            self.singular_values.iter().map(|&s| vec![s]).collect();
        crate::table::write_csv(
            &sidecar,
            &format!("singular_value (cond={:.6})", self.cond()),
            sv_rows.iter().map(|r| r.as_slice()),
        )
    }
}

// ---------------------------------------------------------------------------
// Continuous induced sampling (tensor Legendre)
// ---------------------------------------------------------------------------

/// Univariate induced CDF `F(t) = ∫_{-1}^{t} (Φ¹(z)/(D+1))·dz/2` and its
/// inverse. The density is the degree-2D polynomial `Φ¹/(D+1)` against the
/// uniform probability measure, so per-interval Gauss–Legendre with D+1
/// nodes integrates it exactly.
struct InducedCdf {
    degree: usize,
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    gl: (Vec<f64>, Vec<f64>),
}

const CDF_TABLE_SIZE: usize = 4096;

impl InducedCdf {
    fn new(degree: usize) -> Self {
        // Chebyshev-spaced table nodes cluster near ±1 where Φ¹ peaks.
        let nodes: Vec<f64> = (0..CDF_TABLE_SIZE)
            .map(|k| -(std::f64::consts::PI * k as f64 / (CDF_TABLE_SIZE - 1) as f64).cos())
            .collect();
        let gl = gauss_legendre(degree + 1);
        let mut cdf = Vec::with_capacity(CDF_TABLE_SIZE);
        cdf.push(0.0);
        let mut acc = 0.0;
        for k in 1..CDF_TABLE_SIZE {
            acc += segment_mass(degree, nodes[k - 1], nodes[k], &gl);
            cdf.push(acc);
        }
        // Total mass is 1 by orthonormality; renormalize residual roundoff.
        let total = *cdf.last().unwrap();
        for v in cdf.iter_mut() {
            *v /= total;
        }
        InducedCdf { degree, nodes, cdf, gl }
    }

    /// Monotone bisection to 1e-12 in quantile, then one Newton polish.
    fn invert(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(HlsError::InvalidInput(format!(
                "quantile {u} outside [0,1]"
            )));
        }
        if u <= 0.0 {
            return Ok(-1.0);
        }
        if u >= 1.0 {
            return Ok(1.0);
        }
        // Table bracket.
        let k = match self.cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(k) => return Ok(self.nodes[k]),
            Err(k) => k, // cdf[k-1] < u < cdf[k]
        };
        let (mut lo, mut hi) = (self.nodes[k - 1], self.nodes[k]);
        let f_lo = self.cdf[k - 1];
        let mut t = 0.5 * (lo + hi);
        for _ in 0..80 {
            let ft = f_lo + segment_mass(self.degree, self.nodes[k - 1], t, &self.gl);
            if (ft - u).abs() <= 1e-12 {
                break;
            }
            if ft < u {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= f64::EPSILON * 4.0 {
                break;
            }
            t = 0.5 * (lo + hi);
        }
        if !(lo <= t && t <= hi) {
            return Err(HlsError::Numerical(format!(
                "induced CDF inversion lost its bracket at quantile {u}"
            )));
        }
        // Newton polish: F'(t) = Φ¹(t)/(2(D+1)).
        let ft = f_lo + segment_mass(self.degree, self.nodes[k - 1], t, &self.gl);
        let dens = phi1(self.degree, t) / (2.0 * (self.degree + 1) as f64);
        if dens > 0.0 {
            t = (t - (ft - u) / dens).clamp(-1.0, 1.0);
        }
        Ok(t)
    }
}

fn segment_mass(degree: usize, a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let norm = 2.0 * (degree + 1) as f64;
    let mut acc = 0.0;
    for (&x, &w) in gl.0.iter().zip(&gl.1) {
        acc += w * phi1(degree, mid + half * x) / norm;
    }
    acc * half
}

/// Inverse of the univariate induced CDF for a degree-D Legendre factor;
/// a test-only shorthand around [`InducedCdf`].
#[cfg(test)]
pub(crate) fn invert_induced_cdf(degree: usize, u: f64) -> Result<f64> {
    InducedCdf::new(degree).invert(u)
}

/// Draws `m` points from the induced measure of a tensor-Legendre basis by
/// per-coordinate inverse-CDF transform of the stream's unit-cube output,
/// and assembles the weighted design.
pub fn sample_induced_continuous(
    basis: &Arc<BasisSet>,
    m: usize,
    stream: &mut PointStream,
) -> Result<SampleDesign> {
    let degree = basis.degree().ok_or_else(|| {
        HlsError::InvalidInput(
            "continuous induced sampling needs a tensor-product basis; \
             use sample_induced_discrete for grid bases"
                .into(),
        )
    })?;
    let d = basis.dim();
    if stream.dim() != d {
        return Err(HlsError::DimensionMismatch(format!(
            "stream emits dimension {}, basis lives in dimension {d}",
            stream.dim()
        )));
    }
    let cdf = InducedCdf::new(degree);
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let n = basis.n() as f64;
    for _ in 0..m {
        let u = stream.next_unit();
        let mut x = Vec::with_capacity(d);
        for (j, &uj) in u.iter().enumerate() {
            let t = cdf.invert(uj).map_err(|e| {
                HlsError::Numerical(format!("coordinate {j}: {e}"))
            })?;
            x.push(t);
        }
        weights.push(n / basis.phi(&x));
        points.push(x);
    }
    let provenance = format!("induced-continuous(m={m}, {})", stream.provenance());
    SampleDesign::assemble(Arc::clone(basis), points, weights, None, provenance)
}

// ---------------------------------------------------------------------------
// Discrete induced sampling (leverage scores on a grid)
// ---------------------------------------------------------------------------

/// Draws `m` grid indices i.i.d. with probability proportional to the
/// grid-measure leverage `weight_q·Φ(x_q)` (normalized to sum exactly to 1),
/// keeping duplicates as distinct design rows.
pub fn sample_induced_discrete(
    basis: &Arc<BasisSet>,
    m: usize,
    stream: &mut PointStream,
) -> Result<SampleDesign> {
    let grid = basis.grid().ok_or_else(|| {
        HlsError::InvalidInput("discrete induced sampling needs a grid basis".into())
    })?;
    let q = grid.q();
    let n = basis.n() as f64;
    let mut probs: Vec<f64> = grid
        .phi_on_grid()
        .iter()
        .zip(grid.grid_weights())
        .map(|(&phi, &w)| phi * w)
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(HlsError::Numerical("all leverage scores vanish".into()));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    let mut cum = Vec::with_capacity(q);
    let mut acc = 0.0;
    for &p in &probs {
        acc += p;
        cum.push(acc);
    }
    *cum.last_mut().unwrap() = 1.0;

    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let u = stream.next_scalar();
        let mut k = cum.partition_point(|&c| c < u);
        if k >= q {
            k = q - 1;
        }
        // Never select a zero-probability cell (possible only when u lands
        // exactly on a cumulative boundary).
        while probs[k] == 0.0 && k + 1 < q {
            k += 1;
        }
        indices.push(k);
    }
    let points: Vec<Vec<f64>> = indices.iter().map(|&k| grid.grid_points()[k].clone()).collect();
    let weights: Vec<f64> = indices.iter().map(|&k| n / grid.phi_on_grid()[k]).collect();
    let provenance = format!("induced-discrete(m={m}, Q={q}, {})", stream.provenance());
    SampleDesign::assemble(Arc::clone(basis), points, weights, Some(indices), provenance)
}

// ---------------------------------------------------------------------------
// Boosting
// ---------------------------------------------------------------------------

/// How [`boost`] accepts a trial design.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcceptRule {
    /// Take the first trial whose condition number is below the threshold.
    FirstBelowThreshold,
    /// Run all trials and keep the best-conditioned one.
    MinCond,
}

/// Retry policy for condition-number boosting.
#[derive(Clone, Copy, Debug)]
pub struct BoostingPolicy {
    pub trials: usize,
    pub cond_threshold: f64,
    pub accept_rule: AcceptRule,
}

impl BoostingPolicy {
    pub fn new(trials: usize, cond_threshold: f64, accept_rule: AcceptRule) -> Result<Self> {
        if trials < 1 {
            return Err(HlsError::InvalidInput("boosting needs at least one trial".into()));
        }
        if !(cond_threshold > 1.0) {
            return Err(HlsError::InvalidInput(format!(
                "condition threshold must exceed 1, got {cond_threshold}"
            )));
        }
        Ok(BoostingPolicy { trials, cond_threshold, accept_rule })
    }
}

/// Repeats a sampling call on derived substreams until the weighted design
/// matrix is acceptably conditioned. Under `FirstBelowThreshold` the first
/// passing trial wins and later substreams are never consumed; if no trial
/// passes, the best design is returned with `threshold_missed` set.
pub fn boost(
    mut sample: impl FnMut(&mut PointStream) -> Result<SampleDesign>,
    policy: &BoostingPolicy,
    stream: &PointStream,
) -> Result<SampleDesign> {
    let mut best: Option<SampleDesign> = None;
    for trial in 0..policy.trials {
        let mut sub = stream.substream(trial as u64);
        let mut design = sample(&mut sub)?;
        design.trials_run = trial + 1;
        let cond = design.cond();
        if policy.accept_rule == AcceptRule::FirstBelowThreshold && cond < policy.cond_threshold {
            design.provenance = format!(
                "boost(trial {}/{}, cond={cond:.4}): {}",
                trial + 1,
                policy.trials,
                design.provenance
            );
            return Ok(design);
        }
        if best.as_ref().map_or(true, |b| cond < b.cond()) {
            best = Some(design);
        }
    }
    let mut best = best.expect("at least one trial ran");
    let cond = best.cond();
    best.trials_run = policy.trials;
    best.threshold_missed = match policy.accept_rule {
        AcceptRule::FirstBelowThreshold => cond >= policy.cond_threshold,
        AcceptRule::MinCond => false,
    };
    best.provenance = format!(
        "boost(best of {}, cond={cond:.4}{}): {}",
        policy.trials,
        if best.threshold_missed { ", threshold missed" } else { "" },
        best.provenance
    );
    Ok(best)
}

/// Leverage values used by `sample_induced_discrete`, exposed for tests and
/// diagnostics: probabilities over grid indices, summing to 1.
pub fn leverage_probabilities(basis: &BasisSet) -> Result<Vec<f64>> {
    let grid = basis
        .grid()
        .ok_or_else(|| HlsError::InvalidInput("leverage scores need a grid basis".into()))?;
    let mut probs: Vec<f64> = grid
        .phi_on_grid()
        .iter()
        .zip(grid.grid_weights())
        .map(|(&phi, &w)| phi * w)
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{discretize_basis, tensor_legendre_basis, ScalarFn};
    use crate::domain::HyperRectangle;
    use approx::assert_abs_diff_eq;

    fn legendre(d: usize, degree: usize) -> Arc<BasisSet> {
        tensor_legendre_basis(&HyperRectangle::symmetric_cube(d), degree).unwrap()
    }

    #[test]
    fn degree_zero_cdf_is_uniform() {
        // Φ ≡ 1 makes the induced measure the uniform one.
        assert_abs_diff_eq!(invert_induced_cdf(0, 0.5).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(invert_induced_cdf(0, 0.25).unwrap(), -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(invert_induced_cdf(0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_one_median_is_zero() {
        // Density (1+3z²)/4 is symmetric about 0.
        assert_abs_diff_eq!(invert_induced_cdf(1, 0.5).unwrap(), 0.0, epsilon = 1e-10);
        // F(t) = (t+t³+2)/4; F(1/2) = 21/32.
        assert_abs_diff_eq!(
            invert_induced_cdf(1, 21.0 / 32.0).unwrap(),
            0.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn inversion_round_trips_through_cdf() {
        // For several degrees, F(F⁻¹(u)) = u to the advertised tolerance.
        for degree in [2usize, 6, 11] {
            let cdf = InducedCdf::new(degree);
            for i in 0..50 {
                let u = (i as f64 + 0.5) / 50.0;
                let t = cdf.invert(u).unwrap();
                let k = cdf.nodes.partition_point(|&nk| nk < t);
                let back = if k == 0 {
                    0.0
                } else {
                    cdf.cdf[k - 1] + segment_mass(degree, cdf.nodes[k - 1], t, &cdf.gl)
                };
                assert_abs_diff_eq!(back, u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn continuous_design_shape_and_certificate() {
        let basis = legendre(2, 6);
        let mut stream = PointStream::halton(&[2, 3]).unwrap();
        let design = sample_induced_continuous(&basis, 147, &mut stream).unwrap();
        assert_eq!(design.m(), 147);
        assert_eq!(design.n(), 49);
        // Recorded singular values match a recomputation.
        let sv = design.weighted_matrix().clone().svd(false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in sv.iter().zip(design.singular_values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // Weights are n/Φ at each point.
        for (i, x) in design.points().iter().enumerate() {
            assert_abs_diff_eq!(
                design.weights()[i],
                49.0 / basis.phi(x),
                epsilon = 1e-12
            );
            assert!(x.iter().all(|&c| (-1.0..=1.0).contains(&c)));
        }
    }

    #[test]
    fn rejects_m_below_n() {
        let basis = legendre(1, 3);
        let mut stream = PointStream::iid(7, 1);
        assert!(sample_induced_continuous(&basis, 3, &mut stream).is_err());
    }

    #[test]
    fn quadrature_rule_is_unbiased_on_the_subspace() {
        // (1/m)·Σ w(x_i)v(x_i)² ≈ ‖v‖² = 1 for random unit-coefficient v.
        use rand::SeedableRng;
        let basis = legendre(2, 3);
        let mut stream = PointStream::iid(42, 2);
        let design = sample_induced_continuous(&basis, 10_000, &mut stream).unwrap();
        let b = design.weighted_matrix();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut c = nalgebra::DVector::from_fn(basis.n(), |_, _| {
                crate::domain::standard_normal(&mut rng)
            });
            c /= c.norm();
            let norm2 = (b * &c).norm_squared();
            assert!(
                (norm2 - 1.0).abs() < 0.05,
                "empirical norm {norm2} strays from 1"
            );
        }
    }

    fn tiny_grid_basis(leverages: &[f64]) -> Arc<BasisSet> {
        // A Q-point grid basis whose Φ values are prescribed: take the
        // 1-dimensional basis with values b_q = ±√(Q·π_q·n)… easiest is to
        // build from a snapshot whose orthonormalization has the desired
        // profile. With n = 1 and snapshot values s_q, Φ_q ∝ s_q².
        let q = leverages.len();
        let vals: Vec<f64> = leverages.iter().map(|&l| l.sqrt()).collect();
        let grid: Vec<Vec<f64>> = (0..q).map(|k| vec![k as f64]).collect();
        let snap: ScalarFn = {
            let vals = vals.clone();
            Arc::new(move |x: &[f64]| vals[x[0] as usize])
        };
        discretize_basis(vec![snap], grid, None).unwrap()
    }

    #[test]
    fn constant_basis_samples_uniformly() {
        let grid: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64]).collect();
        let snap: ScalarFn = Arc::new(|_: &[f64]| 3.0);
        let basis = discretize_basis(vec![snap], grid, None).unwrap();
        let probs = leverage_probabilities(&basis).unwrap();
        for &p in &probs {
            assert_abs_diff_eq!(p, 1.0 / 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn leverage_frequencies_match_probabilities() {
        // Q=2 with leverage split 0.75/0.25: empirical frequency at m = 1e5
        // within 0.01.
        let basis = tiny_grid_basis(&[0.75, 0.25]);
        let probs = leverage_probabilities(&basis).unwrap();
        assert_abs_diff_eq!(probs[0], 0.75, epsilon = 1e-12);
        let mut stream = PointStream::iid(123, 1);
        let design = sample_induced_discrete(&basis, 100_000, &mut stream).unwrap();
        let hits = design
            .grid_indices()
            .unwrap()
            .iter()
            .filter(|&&k| k == 0)
            .count();
        let freq = hits as f64 / 100_000.0;
        assert!((freq - 0.75).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn discrete_probabilities_sum_to_one() {
        let basis = tiny_grid_basis(&[0.1, 0.4, 0.3, 0.2]);
        let probs = leverage_probabilities(&basis).unwrap();
        let sum: f64 = probs.iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn boost_single_trial_equals_direct_call() {
        let basis = legendre(2, 2);
        let parent = PointStream::iid(77, 2);
        let policy = BoostingPolicy::new(1, 3.0, AcceptRule::MinCond).unwrap();
        let boosted = boost(
            |s| sample_induced_continuous(&basis, 30, s),
            &policy,
            &parent,
        )
        .unwrap();
        let mut direct_stream = parent.substream(0);
        let direct = sample_induced_continuous(&basis, 30, &mut direct_stream).unwrap();
        assert_eq!(boosted.points(), direct.points());
        assert_eq!(boosted.content_hash(), direct.content_hash());
    }

    #[test]
    fn boost_improves_or_flags() {
        let basis = legendre(2, 4);
        let parent = PointStream::iid(5, 2);
        // Loose threshold: accepted quickly.
        let policy = BoostingPolicy::new(20, 10.0, AcceptRule::FirstBelowThreshold).unwrap();
        let d = boost(|s| sample_induced_continuous(&basis, 60, s), &policy, &parent).unwrap();
        assert!(d.cond() < 10.0);
        assert!(!d.threshold_missed());
        // Impossible threshold: falls back to min-cond and flags it.
        let policy = BoostingPolicy::new(5, 1.0000001, AcceptRule::FirstBelowThreshold).unwrap();
        let d = boost(|s| sample_induced_continuous(&basis, 60, s), &policy, &parent).unwrap();
        assert!(d.threshold_missed());
        assert_eq!(d.trials_run(), 5);
        // Min-cond rule over the same trials is at least as good as trial 0.
        let policy_min = BoostingPolicy::new(5, 2.0, AcceptRule::MinCond).unwrap();
        let d_min =
            boost(|s| sample_induced_continuous(&basis, 60, s), &policy_min, &parent).unwrap();
        let mut s0 = parent.substream(0);
        let first = sample_induced_continuous(&basis, 60, &mut s0).unwrap();
        assert!(d_min.cond() <= first.cond() + 1e-12);
    }

    #[test]
    fn embedding_implies_gram_conditioning() {
        // When all singular values sit in [0.9, 1.1], cond(VᵀWV) ≤ (1.1/0.9)².
        let basis = legendre(2, 2);
        let parent = PointStream::scrambled_sobol(31, 2).unwrap();
        let policy = BoostingPolicy::new(50, 1.1 / 0.9, AcceptRule::FirstBelowThreshold).unwrap();
        let d = boost(
            |s| sample_induced_continuous(&basis, 20 * 9, s),
            &policy,
            &parent,
        )
        .unwrap();
        let sv = d.singular_values();
        if sv[0] <= 1.1 && *sv.last().unwrap() >= 0.9 {
            let gram = d.weighted_matrix().transpose() * d.weighted_matrix();
            let gsv = gram.svd(false, false).singular_values;
            let cond = gsv.max() / gsv.min();
            assert!(cond <= (1.1f64 / 0.9).powi(2) + 1e-9);
        } else {
            panic!("boosted design failed to reach the embedding window");
        }
    }

    #[test]
    fn design_csv_round_trip() {
        let basis = legendre(2, 1);
        let mut stream = PointStream::halton(&[2, 3]).unwrap();
        let design = sample_induced_continuous(&basis, 10, &mut stream).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        design.save(&path).unwrap();
        let rows = crate::table::read_csv(&path).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].len(), 3); // x1, x2, weight
        assert_eq!(rows[3][2], design.weights()[3]);
        assert!(path.with_extension("sv.csv").exists());
    }
}
