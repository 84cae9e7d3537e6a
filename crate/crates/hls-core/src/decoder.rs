//! Budgeted noisy evaluation and least-squares decoding.
//!
//! The hybrid estimator never sees single function values: each design point
//! `x_i` receives `L_i` repeated oracle draws whose average, scaled by
//! `√(w_i)/√m`, forms the evaluation vector `y`. Decoding solves
//! `min‖W^{1/2}Vα − y‖₂` either directly (`decode_plain`) or after whitening
//! by the allocation-induced noise covariance `Σ(p)` (`decode_reweighted`).
//! `run_hls` wires sampling, variance estimation, allocation, evaluation,
//! and decoding into the three pipeline variants; `run_erm` is the
//! single-draw-per-fresh-point baseline.

use crate::allocation::{
    a_optimal_allocation, integerize, neyman_allocation, uniform_allocation, Allocation,
    NoiseProfile, NoiseSource,
};
use crate::basis::{BasisSet, ScalarFn};
use crate::domain::{mix_seed, standard_normal, HyperRectangle, PointStream, ProductMeasure};
use crate::error::{HlsError, Result};
use crate::sampler::{
    boost, sample_induced_continuous, sample_induced_discrete, BoostingPolicy, SampleDesign,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// A source of conditionally independent noisy evaluations
/// `y(x) = f(x) + ε(x)`, with optional closed forms for the mean and the
/// conditional variance.
#[derive(Clone)]
pub struct NoisyOracle {
    draw: Arc<dyn Fn(&[f64], &mut ChaCha12Rng) -> f64 + Send + Sync>,
    exact_mean: Option<ScalarFn>,
    exact_variance: Option<ScalarFn>,
}

impl NoisyOracle {
    pub fn new(draw: impl Fn(&[f64], &mut ChaCha12Rng) -> f64 + Send + Sync + 'static) -> Self {
        NoisyOracle { draw: Arc::new(draw), exact_mean: None, exact_variance: None }
    }

    /// Gaussian noise around a known mean: `y = f(x) + σ(x)·ξ`, `ξ ~ N(0,1)`.
    /// Both closed forms are retained, so variance estimation is skipped and
    /// unbiasedness is directly testable.
    pub fn gaussian(
        mean: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let mean: ScalarFn = Arc::new(mean);
        let sigma: ScalarFn = Arc::new(sigma);
        let m2 = Arc::clone(&mean);
        let s2 = Arc::clone(&sigma);
        NoisyOracle {
            draw: Arc::new(move |x, rng| m2(x) + s2(x) * standard_normal(rng)),
            exact_mean: Some(mean),
            exact_variance: Some(Arc::new(move |x| {
                let s = sigma(x);
                s * s
            })),
        }
    }

    pub fn with_exact_mean(mut self, mean: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.exact_mean = Some(Arc::new(mean));
        self
    }

    pub fn with_exact_variance(
        mut self,
        var: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.exact_variance = Some(Arc::new(var));
        self
    }

    pub fn draw(&self, x: &[f64], rng: &mut ChaCha12Rng) -> f64 {
        (self.draw)(x, rng)
    }

    pub fn exact_mean(&self) -> Option<&ScalarFn> {
        self.exact_mean.as_ref()
    }

    pub fn exact_variance(&self) -> Option<&ScalarFn> {
        self.exact_variance.as_ref()
    }
}

/// The weighted evaluation vector `y_i = √(w_i)·ȳ_i/√m` with its raw sample
/// means and integer counts.
#[derive(Clone, Debug)]
pub struct EvaluationVector {
    y: DVector<f64>,
    counts: Vec<usize>,
    means: Vec<f64>,
    total: usize,
}

impl EvaluationVector {
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Which estimator produced an approximant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pipeline {
    /// Uniform allocation, plain decode.
    Hls0,
    /// Neyman allocation, plain decode.
    Hls1,
    /// A-optimal allocation, whitened decode.
    Hls2,
    /// One noisy draw per fresh μ-sample, unweighted least squares.
    Erm,
    /// Plain average of the random basis functions (no decoding at all).
    Avg,
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Pipeline::Hls0 => "HLS-0",
            Pipeline::Hls1 => "HLS-1",
            Pipeline::Hls2 => "HLS-2",
            Pipeline::Erm => "ERM",
            Pipeline::Avg => "AVG",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Pipeline {
    type Err = HlsError;

    /// Inverse of `Display`, used when reading persisted labels back.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HLS-0" => Ok(Pipeline::Hls0),
            "HLS-1" => Ok(Pipeline::Hls1),
            "HLS-2" => Ok(Pipeline::Hls2),
            "ERM" => Ok(Pipeline::Erm),
            "AVG" => Ok(Pipeline::Avg),
            other => Err(HlsError::InvalidInput(format!(
                "unknown pipeline label {other:?}"
            ))),
        }
    }
}

/// A coefficient vector over a basis, evaluable anywhere the basis is.
#[derive(Clone)]
pub struct Approximant {
    coefficients: DVector<f64>,
    basis: Arc<BasisSet>,
    pipeline: Pipeline,
    projected: bool,
}

impl std::fmt::Debug for Approximant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Approximant({}, n={}, projected={})",
            self.pipeline,
            self.coefficients.len(),
            self.projected
        )
    }
}

impl Approximant {
    pub fn new(coefficients: DVector<f64>, basis: Arc<BasisSet>, pipeline: Pipeline) -> Result<Self> {
        if coefficients.len() != basis.n() {
            return Err(HlsError::DimensionMismatch(format!(
                "{} coefficients over an n = {} basis",
                coefficients.len(),
                basis.n()
            )));
        }
        Ok(Approximant { coefficients, basis, pipeline, projected: false })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn pipeline(&self) -> Pipeline {
        self.pipeline
    }

    pub fn projected(&self) -> bool {
        self.projected
    }

    /// Same coefficients flagged as cone-projected; used by the constraint
    /// module when it returns a projected copy.
    pub fn as_projected(mut self, coefficients: DVector<f64>) -> Self {
        self.coefficients = coefficients;
        self.projected = true;
        self
    }

    /// The decoders label their output by decode kind (plain → HLS-0,
    /// whitened → HLS-2); a driver composing stages by hand relabels the
    /// result with the pipeline that actually produced it.
    pub fn relabeled(mut self, pipeline: Pipeline) -> Self {
        self.pipeline = pipeline;
        self
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.basis.evaluate(x).dot(&self.coefficients)
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Draws `L_i` oracle realizations at each design point (counts from
/// [`integerize`]) and assembles the weighted evaluation vector. Every point
/// gets its own RNG substream derived from `seed` and the point index, so
/// worker partitioning cannot change the output.
pub fn evaluate_budget(
    oracle: &NoisyOracle,
    design: &SampleDesign,
    alloc: &Allocation,
    l: usize,
    seed: u64,
) -> Result<EvaluationVector> {
    if alloc.m() != design.m() {
        return Err(HlsError::DimensionMismatch(format!(
            "allocation over {} points for a design of {}",
            alloc.m(),
            design.m()
        )));
    }
    let counts = integerize(alloc, l)?;
    let m = design.m();
    let means: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, i as u64));
            let li = counts[i];
            if li == 0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for _ in 0..li {
                acc += oracle.draw(&design.points()[i], &mut rng);
            }
            acc / li as f64
        })
        .collect();
    if let Some(i) = means.iter().position(|v| !v.is_finite()) {
        return Err(HlsError::NonFinite(format!(
            "oracle produced a non-finite average at design point {i}"
        )));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let y = DVector::from_iterator(
        m,
        (0..m).map(|i| design.weights()[i].sqrt() * means[i] * scale),
    );
    Ok(EvaluationVector { y, counts, means, total: l })
}

/// Monte Carlo conditional-variance estimate at the design points: the
/// unbiased sample variance of `r` draws per point (divisor r−1), floored at
/// 1e-12 so the allocation optimizers stay well posed. These draws are
/// bookkept separately from the evaluation budget `L`.
pub fn estimate_variance(
    oracle: &NoisyOracle,
    design: &SampleDesign,
    r: usize,
    seed: u64,
) -> Result<NoiseProfile> {
    if r < 2 {
        return Err(HlsError::InvalidInput(format!(
            "variance estimation needs at least 2 draws per point, got {r}"
        )));
    }
    let sigma2: Vec<f64> = (0..design.m())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed ^ 0x9e37, i as u64));
            let draws: Vec<f64> =
                (0..r).map(|_| oracle.draw(&design.points()[i], &mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / r as f64;
            let ss: f64 = draws.iter().map(|d| (d - mean) * (d - mean)).sum();
            (ss / (r - 1) as f64).max(1e-12)
        })
        .collect();
    NoiseProfile::new(sigma2, NoiseSource::McEstimated { r })
}

/// Exact variance profile at the design points when the oracle knows σ².
pub fn exact_variance_profile(oracle: &NoisyOracle, design: &SampleDesign) -> Result<NoiseProfile> {
    let var = oracle.exact_variance().ok_or_else(|| {
        HlsError::InvalidInput("oracle carries no exact variance function".into())
    })?;
    let sigma2: Vec<f64> = design.points().iter().map(|x| var(x)).collect();
    NoiseProfile::new(sigma2, NoiseSource::Exact)
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// SVD pseudoinverse solve with relative cutoff 1e-12; declares rank
/// deficiency instead of silently truncating.
fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || svd.singular_values.iter().any(|&s| s <= 1e-12 * smax) {
        return Err(HlsError::RankDeficient(format!(
            "{context}: design matrix numerically rank deficient \
             (singular value ratio {:.3e})",
            svd.singular_values.min() / smax.max(1e-300)
        )));
    }
    let ut_b = svd.u.as_ref().unwrap().transpose() * b;
    let scaled = DVector::from_iterator(
        ut_b.len(),
        ut_b.iter().zip(svd.singular_values.iter()).map(|(&v, &s)| v / s),
    );
    Ok(svd.v_t.as_ref().unwrap().transpose() * scaled)
}

/// Non-reweighted least squares: `α̂ = (W^{1/2}V)†·y`.
pub fn decode_plain(design: &SampleDesign, ev: &EvaluationVector) -> Result<Approximant> {
    if ev.counts().len() != design.m() {
        return Err(HlsError::DimensionMismatch(format!(
            "evaluation vector over {} points for a design of {}",
            ev.counts().len(),
            design.m()
        )));
    }
    let alpha = pinv_solve(design.weighted_matrix(), ev.y(), "plain decode")?;
    Approximant::new(alpha, Arc::clone(design.basis()), Pipeline::Hls0)
}

/// Noise-whitened least squares: both sides are scaled by `Σ(p)^{-1/2}`,
/// where `Σ(p)_ii = w_i·σ_i²/(m·L·p_i)` is the conditional covariance of the
/// evaluation vector.
pub fn decode_reweighted(
    design: &SampleDesign,
    ev: &EvaluationVector,
    alloc: &Allocation,
    noise: &NoiseProfile,
    l: usize,
) -> Result<Approximant> {
    let m = design.m();
    if noise.len() != m || alloc.m() != m {
        return Err(HlsError::DimensionMismatch(
            "design, allocation, and noise profile must share m".into(),
        ));
    }
    let mut scaled = design.weighted_matrix().clone();
    let mut y = ev.y().clone();
    for i in 0..m {
        let s2 = noise.sigma2()[i];
        if s2 == 0.0 {
            continue; // noiseless row: Σ_ii = 0 means the row is exact
        }
        if alloc.p()[i] <= 0.0 {
            return Err(HlsError::InvalidInput(format!(
                "whitening undefined: point {i} has σ² > 0 but zero budget share"
            )));
        }
        let sigma_ii = design.weights()[i] * s2 / (m as f64 * l as f64 * alloc.p()[i]);
        let inv_sqrt = 1.0 / sigma_ii.sqrt();
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= inv_sqrt;
        }
        y[i] *= inv_sqrt;
    }
    let alpha = pinv_solve(&scaled, &y, "reweighted decode")?;
    Approximant::new(alpha, Arc::clone(design.basis()), Pipeline::Hls2)
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// Shared knobs for a hybrid pipeline run.
#[derive(Clone, Debug)]
pub struct HlsOptions {
    /// Design size m (≥ n).
    pub m: usize,
    /// Total evaluation budget L (≥ m so every point can be visited).
    pub l: usize,
    /// Lower bound δ of the A-optimal feasible set (HLS-2 only).
    pub delta: f64,
    /// Monte Carlo draws per point for variance estimation when the oracle
    /// has no closed-form σ².
    pub variance_draws: usize,
    /// Optional condition-number boosting of the sampling stage.
    pub boosting: Option<BoostingPolicy>,
}

pub(crate) fn tag(stage: &str, e: HlsError) -> HlsError {
    match e {
        HlsError::InvalidInput(m) => HlsError::InvalidInput(format!("{stage}: {m}")),
        HlsError::DimensionMismatch(m) => HlsError::DimensionMismatch(format!("{stage}: {m}")),
        HlsError::RankDeficient(m) => HlsError::RankDeficient(format!("{stage}: {m}")),
        HlsError::NonFinite(m) => HlsError::NonFinite(format!("{stage}: {m}")),
        HlsError::NonConvergence(m) => HlsError::NonConvergence(format!("{stage}: {m}")),
        HlsError::Numerical(m) => HlsError::Numerical(format!("{stage}: {m}")),
        HlsError::Config(m) => HlsError::Config(format!("{stage}: {m}")),
        io @ HlsError::Io { .. } => io,
    }
}

/// Samples a design for `basis` (continuous induced sampling for tensor
/// bases, leverage sampling for grid bases), optionally boosted.
pub fn sample_design(
    basis: &Arc<BasisSet>,
    m: usize,
    boosting: Option<&BoostingPolicy>,
    stream: &PointStream,
) -> Result<SampleDesign> {
    let sampler = |s: &mut PointStream| {
        if basis.is_grid() {
            sample_induced_discrete(basis, m, s)
        } else {
            sample_induced_continuous(basis, m, s)
        }
    };
    match boosting {
        Some(policy) => boost(sampler, policy, stream),
        None => sampler(&mut stream.substream(0)),
    }
    .map_err(|e| tag("sampling", e))
}

/// Allocation stage of a pipeline.
pub fn allocate_for(
    pipeline: Pipeline,
    design: &SampleDesign,
    noise: &NoiseProfile,
    l: usize,
    delta: f64,
) -> Result<Allocation> {
    match pipeline {
        Pipeline::Hls0 => uniform_allocation(design, noise),
        Pipeline::Hls1 => neyman_allocation(design, noise),
        Pipeline::Hls2 => a_optimal_allocation(design, noise, l, delta),
        Pipeline::Erm | Pipeline::Avg => Err(HlsError::InvalidInput(format!(
            "{pipeline} has no per-point allocation stage"
        ))),
    }
    .map_err(|e| tag("allocation", e))
}

/// Runs one hybrid pipeline end to end: induced sampling (with optional
/// boosting), variance profiling, allocation, budgeted evaluation, and the
/// pipeline's decode. Stage failures carry the stage name.
pub fn run_hls(
    pipeline: Pipeline,
    basis: &Arc<BasisSet>,
    oracle: &NoisyOracle,
    opts: &HlsOptions,
    design_stream: &PointStream,
    noise_seed: u64,
    eval_seed: u64,
) -> Result<Approximant> {
    if matches!(pipeline, Pipeline::Erm | Pipeline::Avg) {
        return Err(HlsError::InvalidInput(format!(
            "{pipeline} is a baseline, not a hybrid pipeline; see run_erm / mc_average_baseline"
        )));
    }
    if opts.m < basis.n() {
        return Err(HlsError::InvalidInput(format!(
            "m = {} below basis dimension n = {}",
            opts.m,
            basis.n()
        )));
    }
    if opts.l < opts.m {
        return Err(HlsError::InvalidInput(format!(
            "budget L = {} cannot visit all m = {} design points",
            opts.l, opts.m
        )));
    }
    let design = sample_design(basis, opts.m, opts.boosting.as_ref(), design_stream)?;
    let noise = match oracle.exact_variance() {
        Some(_) => exact_variance_profile(oracle, &design),
        None => estimate_variance(oracle, &design, opts.variance_draws, noise_seed),
    }
    .map_err(|e| tag("variance", e))?;
    let alloc = allocate_for(pipeline, &design, &noise, opts.l, opts.delta)?;
    let ev = evaluate_budget(oracle, &design, &alloc, opts.l, eval_seed)
        .map_err(|e| tag("evaluation", e))?;
    let approx = match pipeline {
        Pipeline::Hls2 => decode_reweighted(&design, &ev, &alloc, &noise, opts.l),
        _ => decode_plain(&design, &ev),
    }
    .map_err(|e| tag("decode", e))?;
    let mut approx = approx;
    approx.pipeline = pipeline;
    Ok(approx)
}

/// The empirical-risk baseline: `L` fresh points from μ, one noisy draw
/// each, unweighted least squares via streaming normal equations.
pub fn run_erm(
    basis: &Arc<BasisSet>,
    oracle: &NoisyOracle,
    l: usize,
    domain: &HyperRectangle,
    stream: &mut PointStream,
    eval_seed: u64,
) -> Result<Approximant> {
    let n = basis.n();
    if l < n {
        return Err(HlsError::InvalidInput(format!(
            "ERM with L = {l} draws cannot determine n = {n} coefficients"
        )));
    }
    let points = crate::domain::generate_points(stream, l, domain)?;
    // Per-chunk partials are folded in chunk order so the accumulated sums do
    // not depend on how the thread pool happens to split the work.
    let partials: Vec<(DMatrix<f64>, DVector<f64>)> = points
        .par_chunks(1024.max(l / 256))
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut gram = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            let base = chunk_idx * 1024.max(l / 256);
            for (off, x) in chunk.iter().enumerate() {
                let mut rng =
                    ChaCha12Rng::seed_from_u64(mix_seed(eval_seed, (base + off) as u64));
                let v = basis.evaluate(x);
                let yi = oracle.draw(x, &mut rng);
                gram.syger(1.0, &v, &v, 1.0);
                rhs.axpy(yi, &v, 1.0);
            }
            (gram, rhs)
        })
        .collect();
    let (gram, rhs) = partials.into_iter().fold(
        (DMatrix::zeros(n, n), DVector::zeros(n)),
        |(g1, r1), (g2, r2)| (g1 + g2, r1 + r2),
    );
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        HlsError::RankDeficient(
            "ERM normal equations are singular; draw more points".into(),
        )
    })?;
    Approximant::new(chol.solve(&rhs), Arc::clone(basis), Pipeline::Erm)
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// `‖f̂ − f‖²_{L²_μ}` by tensor quadrature against a closed-form reference.
pub fn mse_quadrature(
    approx: &Approximant,
    reference: &ScalarFn,
    measure: &ProductMeasure,
    level: usize,
) -> Result<f64> {
    let a = approx.clone();
    let r = Arc::clone(reference);
    crate::domain::quadrature_integral(
        move |x| {
            let d = a.evaluate(x) - r(x);
            d * d
        },
        measure,
        level,
    )
}

/// Mean squared mismatch against reference values on explicit test points.
pub fn mse_test_points(
    approx: &Approximant,
    test_points: &[Vec<f64>],
    reference_values: &[f64],
) -> Result<f64> {
    if test_points.len() != reference_values.len() || test_points.is_empty() {
        return Err(HlsError::InvalidInput(format!(
            "{} test points vs {} reference values",
            test_points.len(),
            reference_values.len()
        )));
    }
    let sq: Vec<f64> = test_points
        .par_iter()
        .zip(reference_values)
        .map(|(x, &fx)| {
            let d = approx.evaluate(x) - fx;
            d * d
        })
        .collect();
    Ok(sq.iter().sum::<f64>() / test_points.len() as f64)
}
