//! Bivariate Black–Scholes spread options: the driving example where noise
//! is structural rather than incidental.
//!
//! A call spread pays `max{S_T⁽¹⁾ − S_T⁽²⁾ − K, 0}`; under risk-neutral
//! geometric Brownian motion the discounted payoff has the closed sample
//! form implemented by [`discounted_spread_payoff`], whose conditional mean
//! over the driving normals is the price. Treating that payoff as a random
//! field over `x = (T, K, σ⁽¹⁾, σ⁽²⁾, ρ)` plugs the whole pricing problem
//! into the random-subspace machinery. The module also carries two
//! independent validation paths — the Margrabe exchange-option closed form
//! at `K = 0` and brute-force Monte Carlo quote surfaces — plus a
//! box-constrained Gauss–Newton calibrator that fits `(σ⁽¹⁾, σ⁽²⁾)` to
//! quotes through an arbitrary surrogate.

use crate::basis::ScalarFn;
use crate::decoder::{Approximant, Pipeline};
use crate::domain::{mix_seed, standard_normal, HyperRectangle};
use crate::error::{HlsError, Result};
use crate::random_subspace::RandomFieldGenerator;
use crate::table::{fmt_f64, write_text_csv};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::path::Path;
use std::sync::Arc;

/// Two-asset Black–Scholes market: spots, rate, volatilities, correlation.
#[derive(Clone, Copy, Debug)]
pub struct BSModel {
    r: f64,
    s0: [f64; 2],
    sigma: [f64; 2],
    rho: f64,
}

impl BSModel {
    pub fn new(r: f64, s0: [f64; 2], sigma: [f64; 2], rho: f64) -> Result<Self> {
        if !(r.is_finite() && s0.iter().all(|v| v.is_finite() && *v > 0.0)) {
            return Err(HlsError::InvalidInput(format!(
                "spots must be positive and finite, got ({}, {})",
                s0[0], s0[1]
            )));
        }
        if sigma.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(HlsError::InvalidInput(format!(
                "volatilities must be nonnegative, got ({}, {})",
                sigma[0], sigma[1]
            )));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(HlsError::InvalidInput(format!("correlation {rho} outside [-1, 1]")));
        }
        Ok(BSModel { r, s0, sigma, rho })
    }

    /// The reference market: r = 0.03, S₀ = (100, 96).
    pub fn standard(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        BSModel::new(0.03, [100.0, 96.0], [sigma1, sigma2], rho)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s0(&self) -> [f64; 2] {
        self.s0
    }

    pub fn sigma(&self) -> [f64; 2] {
        self.sigma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// The model's own coordinates assembled into a field point
    /// `(T, K, σ⁽¹⁾, σ⁽²⁾, ρ)`.
    pub fn field_point(&self, t: f64, k: f64) -> [f64; 5] {
        [t, k, self.sigma[0], self.sigma[1], self.rho]
    }
}

/// The approximation domain for the spread-price field:
/// `Ω = [0,1] × [0,50] × [0,0.5]² × [-1,1]`.
pub fn spread_domain() -> HyperRectangle {
    HyperRectangle::new(
        vec![0.0, 0.0, 0.0, 0.0, -1.0],
        vec![1.0, 50.0, 0.5, 0.5, 1.0],
    )
    .expect("static bounds are valid")
}

/// One discounted spread-payoff sample at `x = (T, K, σ⁽¹⁾, σ⁽²⁾, ρ)` for
/// standard bivariate normal drivers `(z₁, z₂)`:
/// `max{S₀⁽¹⁾e^{-σ₁²T/2 + σ₁√T·z₁} − S₀⁽²⁾e^{-σ₂²T/2 + σ₂√T(ρz₁+√(1-ρ²)z₂)} − Ke^{-rT}, 0}`.
pub fn discounted_spread_payoff(r: f64, s0: [f64; 2], x: &[f64], z1: f64, z2: f64) -> f64 {
    let (t, k, sig1, sig2, rho) = (x[0], x[1], x[2], x[3], x[4]);
    let sqrt_t = t.max(0.0).sqrt();
    let a1 = s0[0] * (-0.5 * sig1 * sig1 * t + sig1 * sqrt_t * z1).exp();
    let cross = (1.0 - rho * rho).max(0.0).sqrt();
    let a2 = s0[1] * (-0.5 * sig2 * sig2 * t + sig2 * sqrt_t * (rho * z1 + cross * z2)).exp();
    (a1 - a2 - k * (-r * t).exp()).max(0.0)
}

/// The spread payoff as a random field over `x = (T, K, σ⁽¹⁾, σ⁽²⁾, ρ)`:
/// each draw fixes one bivariate normal `(z₁, z₂)` and returns the
/// corresponding discounted-payoff function. Its pointwise mean is the
/// spread price. Only `r` and `s0` are taken from `model_base`; the
/// volatilities and correlation live in `x`.
pub fn payoff_field(model_base: &BSModel) -> RandomFieldGenerator {
    let r = model_base.r;
    let s0 = model_base.s0;
    RandomFieldGenerator::new(move |rng| {
        let z1 = standard_normal(rng);
        let z2 = standard_normal(rng);
        Arc::new(move |x: &[f64]| discounted_spread_payoff(r, s0, x, z1, z2))
    })
}

/// Margrabe's closed form for the exchange option (the `K = 0` spread):
/// `S₀⁽¹⁾N(d₁) − S₀⁽²⁾N(d₂)` with `σ̄² = σ₁² + σ₂² − 2ρσ₁σ₂`. Degenerate
/// volatility or maturity collapses to the deterministic spread
/// `max{S₀⁽¹⁾ − S₀⁽²⁾, 0}`.
pub fn margrabe_price(model: &BSModel, t: f64) -> f64 {
    let [s1, s2] = model.s0;
    let [sig1, sig2] = model.sigma;
    let var = (sig1 * sig1 + sig2 * sig2 - 2.0 * model.rho * sig1 * sig2).max(0.0);
    let vol_t = (var * t.max(0.0)).sqrt();
    if vol_t < 1e-12 {
        return (s1 - s2).max(0.0);
    }
    let d1 = ((s1 / s2).ln() + 0.5 * vol_t * vol_t) / vol_t;
    let d2 = d1 - vol_t;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    s1 * std_normal.cdf(d1) - s2 * std_normal.cdf(d2)
}

/// A maturity×strike surface of (synthetic) market prices with its Monte
/// Carlo provenance.
#[derive(Clone, Debug)]
pub struct QuoteGrid {
    maturities: Vec<f64>,
    strikes: Vec<f64>,
    prices: DMatrix<f64>,
    mc_samples: usize,
    seed: u64,
}

impl QuoteGrid {
    pub fn new(
        maturities: Vec<f64>,
        strikes: Vec<f64>,
        prices: DMatrix<f64>,
        mc_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if maturities.is_empty() || strikes.is_empty() {
            return Err(HlsError::InvalidInput("quote grid needs maturities and strikes".into()));
        }
        if prices.nrows() != maturities.len() || prices.ncols() != strikes.len() {
            return Err(HlsError::DimensionMismatch(format!(
                "price matrix {}×{} against {} maturities × {} strikes",
                prices.nrows(),
                prices.ncols(),
                maturities.len(),
                strikes.len()
            )));
        }
        if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(HlsError::InvalidInput(
                "prices must be finite and nonnegative".into(),
            ));
        }
        Ok(QuoteGrid { maturities, strikes, prices, mc_samples, seed })
    }

    /// The liquid-market maturity ladder `{10, 20, 30, 60, 120, 180, 240}/252`.
    pub fn standard_maturities() -> Vec<f64> {
        [10.0, 20.0, 30.0, 60.0, 120.0, 180.0, 240.0]
            .iter()
            .map(|d| d / 252.0)
            .collect()
    }

    /// Odd strikes 1, 3, …, 49.
    pub fn standard_strikes() -> Vec<f64> {
        (1..=25).map(|k| (2 * k - 1) as f64).collect()
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn price(&self, t_idx: usize, k_idx: usize) -> f64 {
        self.prices[(t_idx, k_idx)]
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.maturities.len() * self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty axes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::with_capacity(self.len());
        for (i, t) in self.maturities.iter().enumerate() {
            for (j, k) in self.strikes.iter().enumerate() {
                rows.push(vec![
                    fmt_f64(*t),
                    fmt_f64(*k),
                    fmt_f64(self.prices[(i, j)]),
                    self.mc_samples.to_string(),
                    self.seed.to_string(),
                ]);
            }
        }
        write_text_csv(path, "T,K,price,mc_samples,seed", &rows)
    }

    /// Reads a surface saved by [`QuoteGrid::save`]. Rows must form a
    /// complete grid ordered maturity-major.
    pub fn load(path: &Path) -> Result<Self> {
        let rows = crate::table::read_csv(path)?;
        if rows.is_empty() {
            return Err(HlsError::InvalidInput(format!("{}: no quote rows", path.display())));
        }
        let mut maturities = Vec::new();
        let mut strikes = Vec::new();
        for row in &rows {
            if row.len() != 5 {
                return Err(HlsError::InvalidInput(format!(
                    "{}: quote rows need 5 columns, got {}",
                    path.display(),
                    row.len()
                )));
            }
            if maturities.last() != Some(&row[0]) {
                maturities.push(row[0]);
            }
            if maturities.len() == 1 {
                strikes.push(row[1]);
            }
        }
        let (nt, nk) = (maturities.len(), strikes.len());
        if nt * nk != rows.len() {
            return Err(HlsError::InvalidInput(format!(
                "{}: {} rows do not form a {}×{} grid",
                path.display(),
                rows.len(),
                nt,
                nk
            )));
        }
        let prices = DMatrix::from_fn(nt, nk, |i, j| rows[i * nk + j][2]);
        let mc_samples = rows[0][3] as usize;
        let seed = rows[0][4] as u64;
        QuoteGrid::new(maturities, strikes, prices, mc_samples, seed)
    }
}

/// Monte Carlo quote surface with per-cell standard errors. All `(T, K)`
/// cells share the same driving normals (common random numbers), so the
/// surface inherits the pathwise monotonicity of the payoff in `K`; blocks
/// of draws use deterministic substreams, making the result independent of
/// the worker count.
pub fn synth_market_with_se(
    model_true: &BSModel,
    maturities: &[f64],
    strikes: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<(QuoteGrid, DMatrix<f64>)> {
    if mc_samples == 0 {
        return Err(HlsError::InvalidInput("mc_samples must be at least 1".into()));
    }
    if maturities.is_empty() || strikes.is_empty() {
        return Err(HlsError::InvalidInput("quote grid needs maturities and strikes".into()));
    }
    let (nt, nk) = (maturities.len(), strikes.len());
    let cells = nt * nk;
    const BLOCK: usize = 8192;
    let blocks = mc_samples.div_ceil(BLOCK);
    let r = model_true.r;
    let s0 = model_true.s0;
    let [sig1, sig2] = model_true.sigma;
    let rho = model_true.rho;
    let cross = (1.0 - rho * rho).max(0.0).sqrt();

    // Block partials are folded in block order so repeated calls produce
    // bit-identical surfaces regardless of thread scheduling.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, b as u64));
            let len = BLOCK.min(mc_samples - b * BLOCK);
            let mut sum = vec![0.0f64; cells];
            let mut sumsq = vec![0.0f64; cells];
            for _ in 0..len {
                let z1 = standard_normal(&mut rng);
                let z2 = standard_normal(&mut rng);
                for (i, &t) in maturities.iter().enumerate() {
                    let sqrt_t = t.sqrt();
                    let a1 = s0[0] * (-0.5 * sig1 * sig1 * t + sig1 * sqrt_t * z1).exp();
                    let a2 = s0[1]
                        * (-0.5 * sig2 * sig2 * t + sig2 * sqrt_t * (rho * z1 + cross * z2))
                            .exp();
                    let disc = (-r * t).exp();
                    for (j, &k) in strikes.iter().enumerate() {
                        let pay = (a1 - a2 - k * disc).max(0.0);
                        sum[i * nk + j] += pay;
                        sumsq[i * nk + j] += pay * pay;
                    }
                }
            }
            (sum, sumsq)
        })
        .collect();
    let (sum, sumsq) = partials.into_iter().fold(
        (vec![0.0; cells], vec![0.0; cells]),
        |(mut s1, mut q1), (s2, q2)| {
            for i in 0..cells {
                s1[i] += s2[i];
                q1[i] += q2[i];
            }
            (s1, q1)
        },
    );

    let n = mc_samples as f64;
    let prices = DMatrix::from_fn(nt, nk, |i, j| sum[i * nk + j] / n);
    let se = DMatrix::from_fn(nt, nk, |i, j| {
        if mc_samples < 2 {
            return f64::INFINITY;
        }
        let mean = sum[i * nk + j] / n;
        let var = (sumsq[i * nk + j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    });
    let grid = QuoteGrid::new(maturities.to_vec(), strikes.to_vec(), prices, mc_samples, seed)?;
    Ok((grid, se))
}

/// [`synth_market_with_se`] without the standard errors.
pub fn synth_market(
    model_true: &BSModel,
    maturities: &[f64],
    strikes: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<QuoteGrid> {
    synth_market_with_se(model_true, maturities, strikes, mc_samples, seed).map(|(g, _)| g)
}

/// Result of a volatility calibration.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationResult {
    /// Calibrated `(σ̂⁽¹⁾, σ̂⁽²⁾)`.
    pub sigma: [f64; 2],
    /// Mean squared quote mismatch at the calibrated point.
    pub loss: f64,
    /// Projected-gradient norm at the final iterate.
    pub gradient_norm: f64,
    /// Gauss–Newton iterations performed.
    pub iterations: usize,
    /// False when the iteration cap was hit before the gradient tolerance;
    /// the best iterate is still returned.
    pub converged: bool,
}

const CAL_BOUNDS: [f64; 2] = [0.0, 0.5];
const CAL_FD_STEP: f64 = 1e-5;
const CAL_GRAD_TOL: f64 = 1e-10;
const CAL_MAX_ITERS: usize = 500;

fn clamp_box(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        v[0].clamp(CAL_BOUNDS[0], CAL_BOUNDS[1]),
        v[1].clamp(CAL_BOUNDS[0], CAL_BOUNDS[1]),
    )
}

/// Fits `(σ⁽¹⁾, σ⁽²⁾) ∈ [0, 0.5]²` so the surrogate's prices match the
/// quotes in mean square, with the correlation held fixed. Projected
/// Gauss–Newton: forward-difference Jacobian (step 1e-5), steps clamped to
/// the box, Armijo backtracking, stopping at projected-gradient norm 1e-10
/// or 500 iterations (the latter flags `converged = false`).
pub fn calibrate(
    surrogate: &Approximant,
    quotes: &QuoteGrid,
    rho_fixed: f64,
    init: [f64; 2],
) -> Result<CalibrationResult> {
    if init.iter().any(|s| !(CAL_BOUNDS[0]..=CAL_BOUNDS[1]).contains(s)) {
        return Err(HlsError::InvalidInput(format!(
            "initial volatilities ({}, {}) outside [{}, {}]",
            init[0], init[1], CAL_BOUNDS[0], CAL_BOUNDS[1]
        )));
    }
    if !(-1.0..=1.0).contains(&rho_fixed) {
        return Err(HlsError::InvalidInput(format!(
            "fixed correlation {rho_fixed} outside [-1, 1]"
        )));
    }
    let cells: Vec<(f64, f64, f64)> = {
        let mut v = Vec::with_capacity(quotes.len());
        for (i, &t) in quotes.maturities().iter().enumerate() {
            for (j, &k) in quotes.strikes().iter().enumerate() {
                v.push((t, k, quotes.price(i, j)));
            }
        }
        v
    };
    let scale = 1.0 / (cells.len() as f64).sqrt();
    // Residual vector scaled so that ‖r(σ)‖² is the mean squared mismatch.
    let residuals = |sig: &Vector2<f64>| -> DVector<f64> {
        DVector::from_iterator(
            cells.len(),
            cells.par_iter().map(|&(t, k, y)| {
                (surrogate.evaluate(&[t, k, sig[0], sig[1], rho_fixed]) - y) * scale
            }).collect::<Vec<f64>>(),
        )
    };

    let mut x = Vector2::new(init[0], init[1]);
    let mut res = residuals(&x);
    let mut loss = res.norm_squared();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    while iterations < CAL_MAX_ITERS {
        // Forward-difference Jacobian, 2 columns.
        let mut jac = DMatrix::zeros(cells.len(), 2);
        for c in 0..2 {
            let mut xp = x;
            xp[c] += CAL_FD_STEP;
            let rp = residuals(&xp);
            for row in 0..cells.len() {
                jac[(row, c)] = (rp[row] - res[row]) / CAL_FD_STEP;
            }
        }
        let grad = jac.transpose() * &res * 2.0;
        let pg = x - clamp_box(x - Vector2::new(grad[0], grad[1]));
        grad_norm = pg.norm();
        if grad_norm <= CAL_GRAD_TOL {
            converged = true;
            break;
        }
        // Gauss–Newton direction; fall back to steepest descent when the
        // normal matrix is numerically singular (e.g. flat surrogate).
        let jtj = jac.transpose() * &jac;
        let rhs = -(jac.transpose() * &res);
        let dir = Matrix2::new(jtj[(0, 0)], jtj[(0, 1)], jtj[(1, 0)], jtj[(1, 1)])
            .cholesky()
            .map(|ch| ch.solve(&Vector2::new(rhs[0], rhs[1])))
            .unwrap_or_else(|| -0.5 * Vector2::new(grad[0], grad[1]));
        iterations += 1;
        // Armijo backtracking on the projected step.
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = clamp_box(x + step * dir);
            let shift = cand - x;
            if shift.norm() == 0.0 {
                break;
            }
            let cand_res = residuals(&cand);
            let cand_loss = cand_res.norm_squared();
            if cand_loss <= loss + 1e-4 * (grad.dot(&DVector::from_column_slice(shift.as_slice())))
            {
                x = cand;
                res = cand_res;
                loss = cand_loss;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // No admissible decrease along the direction: re-measure the
            // projected gradient and stop (either converged or stalled).
            converged = grad_norm <= CAL_GRAD_TOL;
            break;
        }
    }
    Ok(CalibrationResult {
        sigma: [x[0], x[1]],
        loss,
        gradient_norm: grad_norm,
        iterations,
        converged,
    })
}

/// One calibration outcome for reporting.
#[derive(Clone, Debug)]
pub struct CalibrationRow {
    pub replicate: usize,
    pub pipeline: String,
    pub sigma1_hat: f64,
    pub sigma2_hat: f64,
    pub loss: f64,
    pub iterations: usize,
}

/// Writes calibration outcomes as CSV
/// (`replicate,pipeline,sigma1_hat,sigma2_hat,loss,iterations`).
pub fn save_calibration_rows(path: &Path, rows: &[CalibrationRow]) -> Result<()> {
    let text: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.replicate.to_string(),
                r.pipeline.clone(),
                fmt_f64(r.sigma1_hat),
                fmt_f64(r.sigma2_hat),
                fmt_f64(r.loss),
                r.iterations.to_string(),
            ]
        })
        .collect();
    write_text_csv(path, "replicate,pipeline,sigma1_hat,sigma2_hat,loss,iterations", &text)
}

// ---------------------------------------------------------------------------
// Surrogate persistence
// ---------------------------------------------------------------------------

/// Draws `n` payoff snapshots with their driving normal pairs exposed.
///
/// [`payoff_field`] keeps the pair inside the closure, which is all the
/// in-process pipeline needs; persisting a surrogate additionally requires
/// the pairs themselves so the closures can be rebuilt on reload.
pub fn spread_snapshots(
    model: &BSModel,
    n: usize,
    seed: u64,
) -> (Vec<ScalarFn>, Vec<[f64; 2]>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let r = model.r();
    let s0 = model.s0();
    let mut snaps: Vec<ScalarFn> = Vec::with_capacity(n);
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = standard_normal(&mut rng);
        let z2 = standard_normal(&mut rng);
        draws.push([z1, z2]);
        snaps.push(Arc::new(move |x: &[f64]| discounted_spread_payoff(r, s0, x, z1, z2)));
    }
    (snaps, draws)
}

/// Persists a spread-option surrogate into `dir`: the grid basis, the
/// normal pairs behind its snapshots, the model constants entering the
/// payoff, and the coefficient vector. [`load_spread_surrogate`] rebuilds
/// an approximant from this that evaluates anywhere in the domain, not just
/// on the stored grid.
pub fn save_spread_surrogate(
    approx: &Approximant,
    model: &BSModel,
    draws: &[[f64; 2]],
    dir: &Path,
) -> Result<()> {
    let basis = approx.basis();
    if draws.len() != basis.n() {
        return Err(HlsError::DimensionMismatch(format!(
            "{} snapshot draws for an n = {} basis",
            draws.len(),
            basis.n()
        )));
    }
    crate::basis::save_grid_basis(basis, dir)?;
    crate::table::write_csv(
        &dir.join("snapshots.csv"),
        "z1,z2",
        draws.iter().map(|d| d.as_slice()),
    )?;
    let coeffs: Vec<[f64; 1]> = approx.coefficients().iter().map(|&c| [c]).collect();
    crate::table::write_csv(
        &dir.join("coefficients.csv"),
        "alpha",
        coeffs.iter().map(|c| c.as_slice()),
    )?;
    let meta = format!(
        "kind=spread-surrogate\npipeline={}\nprojected={}\nr={}\ns1={}\ns2={}\n",
        approx.pipeline(),
        approx.projected(),
        fmt_f64(model.r()),
        fmt_f64(model.s0()[0]),
        fmt_f64(model.s0()[1]),
    );
    let meta_path = dir.join("surrogate.txt");
    std::fs::write(&meta_path, meta).map_err(|source| HlsError::Io {
        path: meta_path.display().to_string(),
        source,
    })
}

/// Reads a surrogate written by [`save_spread_surrogate`], reconstructing
/// the snapshot closures from the stored normal pairs and reattaching them
/// to the loaded basis (which is spot-checked against the stored values).
pub fn load_spread_surrogate(dir: &Path) -> Result<Approximant> {
    let meta_path = dir.join("surrogate.txt");
    let meta = std::fs::read_to_string(&meta_path).map_err(|source| HlsError::Io {
        path: meta_path.display().to_string(),
        source,
    })?;
    let field = |key: &str| -> Result<&str> {
        meta.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
            .ok_or_else(|| {
                HlsError::InvalidInput(format!(
                    "{}: missing {key}= line",
                    meta_path.display()
                ))
            })
    };
    let number = |key: &str| -> Result<f64> {
        field(key)?.trim().parse::<f64>().map_err(|_| {
            HlsError::InvalidInput(format!(
                "{}: {key} is not a number",
                meta_path.display()
            ))
        })
    };
    let pipeline: Pipeline = field("pipeline")?.trim().parse()?;
    let projected = field("projected")?.trim() == "true";
    let r = number("r")?;
    let s0 = [number("s1")?, number("s2")?];

    let draw_rows = crate::table::read_csv(&dir.join("snapshots.csv"))?;
    let snaps: Vec<ScalarFn> = draw_rows
        .iter()
        .map(|row| {
            if row.len() != 2 {
                return Err(HlsError::InvalidInput(format!(
                    "snapshots.csv: expected z1,z2 rows, found width {}",
                    row.len()
                )));
            }
            let (z1, z2) = (row[0], row[1]);
            Ok(Arc::new(move |x: &[f64]| discounted_spread_payoff(r, s0, x, z1, z2))
                as ScalarFn)
        })
        .collect::<Result<_>>()?;

    let basis = crate::basis::load_grid_basis(dir)?;
    let basis = crate::basis::attach_snapshots(&basis, snaps)?;
    let coeff_rows = crate::table::read_csv(&dir.join("coefficients.csv"))?;
    let coefficients = DVector::from_iterator(
        coeff_rows.len(),
        coeff_rows.iter().map(|row| row[0]),
    );
    let approx = Approximant::new(coefficients.clone(), basis, pipeline)?;
    Ok(if projected { approx.as_projected(coefficients) } else { approx })
}

/// Largest absolute price difference between two parameterizations over a
/// quote grid, each surface priced by independent Monte Carlo runs of
/// `mc_samples` draws. Near-zero output exposes calibration degeneracy:
/// distinct parameters that the market data cannot tell apart.
pub fn degeneracy_probe(
    model_true: &BSModel,
    model_alt: &BSModel,
    maturities: &[f64],
    strikes: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    let (true_grid, _) =
        synth_market_with_se(model_true, maturities, strikes, mc_samples, mix_seed(seed, 0))?;
    let (alt_grid, _) =
        synth_market_with_se(model_alt, maturities, strikes, mc_samples, mix_seed(seed, 1))?;
    Ok((true_grid.prices() - alt_grid.prices()).amax())
}
