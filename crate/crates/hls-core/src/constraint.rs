//! Convex-cone constraints on decoded coefficients.
//!
//! A cone is the set `{Tβ : β ≥ 0}` spanned by generator columns expressed
//! in the orthonormal coefficient basis, so Euclidean projection in
//! coefficient space is exactly `L²` projection in function space. For a
//! basis built from nonnegative-combination snapshots, projecting the
//! decoded coefficients onto this cone restores structure (e.g. positivity
//! across the snapshot family) that noise destroys, and — being a metric
//! projection onto a convex set — can only shrink the error to any target
//! inside the cone.

use crate::basis::GridBasis;
use crate::decoder::Approximant;
use crate::domain::standard_normal;
use crate::error::{HlsError, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A finitely generated convex cone in coefficient space.
#[derive(Clone, Debug)]
pub struct ConvexCone {
    /// n×k generator matrix T; the cone is `{Tβ : β ∈ R^k, β ≥ 0}`.
    generators: DMatrix<f64>,
    /// Generator Gram matrix TᵀT, cached for diagnostics and for checking
    /// consistency against raw snapshot inner products.
    gram: DMatrix<f64>,
}

impl ConvexCone {
    pub fn new(generators: DMatrix<f64>) -> Result<Self> {
        if generators.ncols() == 0 || generators.nrows() == 0 {
            return Err(HlsError::InvalidInput("cone needs at least one generator".into()));
        }
        if generators.iter().any(|v| !v.is_finite()) {
            return Err(HlsError::NonFinite("cone generators contain non-finite entries".into()));
        }
        for j in 0..generators.ncols() {
            if generators.column(j).amax() == 0.0 {
                return Err(HlsError::InvalidInput(format!("generator {j} is the zero vector")));
            }
        }
        let gram = generators.transpose() * &generators;
        Ok(ConvexCone { generators, gram })
    }

    /// The cone of nonnegative snapshot combinations of a grid basis: its
    /// generators are the snapshot coordinates in the orthonormal basis,
    /// i.e. the columns of the change-of-basis matrix.
    pub fn from_grid_basis(grid: &GridBasis) -> Result<Self> {
        ConvexCone::new(grid.to_ortho().clone())
    }

    pub fn dim(&self) -> usize {
        self.generators.nrows()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// Outcome of a cone projection: the nonnegative combination, the projected
/// coefficients, and an optimality certificate.
#[derive(Clone, Debug)]
pub struct ConeProjection {
    /// Nonnegative generator weights; entries outside the active support are
    /// exactly zero.
    pub beta: DVector<f64>,
    /// Projected coefficients `Tβ`.
    pub alpha: DVector<f64>,
    /// Scaled complementarity residual of the nonnegativity conditions.
    pub kkt_residual: f64,
    /// Passive-set changes performed.
    pub iterations: usize,
}

/// Minimum-norm least-squares solution for the column subset `cols` of `t`,
/// via a truncating pseudoinverse (the inner solve of Lawson–Hanson must not
/// fail on transient rank deficiency).
fn lsq_on_subset(t: &DMatrix<f64>, cols: &[usize], rhs: &DVector<f64>) -> DVector<f64> {
    let sub = t.select_columns(cols.iter());
    let svd = sub.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return DVector::zeros(cols.len());
    }
    let ut_b = svd.u.as_ref().unwrap().transpose() * rhs;
    let scaled = DVector::from_iterator(
        ut_b.len(),
        ut_b.iter()
            .zip(svd.singular_values.iter())
            .map(|(&v, &s)| if s > 1e-13 * smax { v / s } else { 0.0 }),
    );
    svd.v_t.as_ref().unwrap().transpose() * scaled
}

/// Euclidean projection of `alpha` onto the cone by Lawson–Hanson active-set
/// NNLS on `min_{β≥0} ‖Tβ − α‖₂`. Bounded at `10·k` passive-set changes;
/// exceeding the bound is reported as non-convergence together with the
/// residual reached.
pub fn project(cone: &ConvexCone, alpha: &DVector<f64>) -> Result<ConeProjection> {
    let t = &cone.generators;
    let (n, k) = (t.nrows(), t.ncols());
    if alpha.len() != n {
        return Err(HlsError::DimensionMismatch(format!(
            "coefficient vector of length {} against a cone in dimension {n}",
            alpha.len()
        )));
    }
    let scale = (t.transpose() * alpha).amax().max(1.0);
    let tol_w = 1e-12 * scale;
    let max_iters = 10 * k;

    let mut beta = DVector::zeros(k);
    let mut passive = vec![false; k];
    let mut w = t.transpose() * (alpha - t * &beta);
    let mut iterations = 0usize;

    loop {
        // Most violated free coordinate.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..k {
            if !passive[i] && w[i] > tol_w {
                if best.map_or(true, |(_, bw)| w[i] > bw) {
                    best = Some((i, w[i]));
                }
            }
        }
        let Some((enter, _)) = best else { break };
        if iterations >= max_iters {
            let kkt = kkt_residual(&beta, &w, scale);
            return Err(HlsError::NonConvergence(format!(
                "cone projection exceeded {max_iters} active-set changes \
                 (KKT residual {kkt:.3e})"
            )));
        }
        passive[enter] = true;
        iterations += 1;

        // Inner loop: re-solve on the passive set, stepping back whenever
        // the unconstrained solution leaves the nonnegative orthant.
        for _ in 0..=k {
            let cols: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = lsq_on_subset(t, &cols, alpha);
            if s.iter().all(|&v| v > 0.0) {
                beta.fill(0.0);
                for (&c, &v) in cols.iter().zip(s.iter()) {
                    beta[c] = v;
                }
                break;
            }
            // Largest feasible step from β toward s.
            let mut theta = f64::INFINITY;
            let mut leave = None;
            for (idx, &c) in cols.iter().enumerate() {
                if s[idx] <= 0.0 {
                    let step = beta[c] / (beta[c] - s[idx]);
                    if step < theta {
                        theta = step;
                        leave = Some(c);
                    }
                }
            }
            let leave = leave.expect("some passive coordinate is nonpositive");
            for (idx, &c) in cols.iter().enumerate() {
                beta[c] += theta * (s[idx] - beta[c]);
            }
            beta[leave] = 0.0;
            passive[leave] = false;
            // Clear any coordinates driven to (or through) zero by roundoff.
            for &c in &cols {
                if passive[c] && beta[c] <= 0.0 {
                    beta[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
        w = t.transpose() * (alpha - t * &beta);
    }

    for i in 0..k {
        if !passive[i] {
            beta[i] = 0.0;
        }
    }
    let kkt = kkt_residual(&beta, &w, scale);
    Ok(ConeProjection { alpha: t * &beta, beta, kkt_residual: kkt, iterations })
}

/// Max violation of stationarity (`w_i = 0` on the support) and dual
/// feasibility (`w_i ≤ 0` off it), relative to the data scale.
fn kkt_residual(beta: &DVector<f64>, w: &DVector<f64>, scale: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..beta.len() {
        let v = if beta[i] > 0.0 { w[i].abs() } else { w[i].max(0.0) };
        worst = worst.max(v);
    }
    worst / scale
}

/// Projects an approximant's coefficients, returning a copy flagged as
/// projected.
pub fn project_approximant(cone: &ConvexCone, approx: &Approximant) -> Result<Approximant> {
    let proj = project(cone, approx.coefficients())?;
    Ok(approx.clone().as_projected(proj.alpha))
}

/// Empirically certifies non-expansiveness: projects `pairs` random
/// coefficient pairs and returns the largest observed ratio
/// `‖P(a) − P(b)‖ / ‖a − b‖` (at most `1 + O(solver tolerance)` for a true
/// metric projection).
pub fn contraction_check(cone: &ConvexCone, pairs: usize, seed: u64) -> Result<f64> {
    if pairs == 0 {
        return Err(HlsError::InvalidInput("need at least one pair".into()));
    }
    let n = cone.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let a = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        let b = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        let gap = (&a - &b).norm();
        if gap < 1e-12 {
            continue;
        }
        let pa = project(cone, &a)?.alpha;
        let pb = project(cone, &b)?.alpha;
        worst = worst.max((pa - pb).norm() / gap);
    }
    Ok(worst)
}
