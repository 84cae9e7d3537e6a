//! Evaluation-budget allocation over the design points.
//!
//! Given `L` total function evaluations and `m` design sites, an allocation
//! is a probability vector `p`: site `i` receives `≈ p_i·L` repeated noisy
//! evaluations whose average drives the least-squares decode. Three rules:
//!
//! - uniform — every site gets the same share;
//! - Neyman — closed form `p_i ∝ w_i·σ_i·√Φ_i`, minimizing the surrogate
//!   objective `G`;
//! - A-optimal — minimizes `H(p) = tr(U(p)⁻¹)`, the decode's total
//!   coefficient variance under noise whitening, over the δ-regularized
//!   simplex `P_m(δ) = {p : Σp = 1, p ≥ δ}` by projected gradient descent.
//!
//! `H` is evaluated through `U(p) = Σ_i c_i·p_i·a_i·a_iᵀ` with
//! `c_i = L·m/(w_i·σ_i²)` and `a_iᵀ` the i-th row of `W^{1/2}V`; its exact
//! gradient is `∂H/∂p_i = −c_i·‖U⁻¹a_i‖²`.

use crate::error::{HlsError, Result};
use crate::sampler::SampleDesign;
use nalgebra::{Cholesky, DMatrix};

/// Provenance of a conditional-variance profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NoiseSource {
    /// Closed-form σ²(x) evaluated at the design points.
    Exact,
    /// Monte Carlo estimate from `r` oracle draws per point.
    McEstimated { r: usize },
    /// Sample variance of existing subspace snapshots (no extra draws).
    ReusedSnapshots,
}

/// Conditional variances σ²(xᵢ) at the design points.
///
/// Entries must be finite and nonnegative; zeros represent noiseless sites
/// and are accepted here, but the Neyman/A-optimal optimizers and the
/// whitened decoder require strictly positive variances and error otherwise.
#[derive(Clone, Debug)]
pub struct NoiseProfile {
    sigma2: Vec<f64>,
    source: NoiseSource,
}

impl NoiseProfile {
    pub fn new(sigma2: Vec<f64>, source: NoiseSource) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(HlsError::InvalidInput("empty variance vector".into()));
        }
        if let Some(bad) = sigma2.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(HlsError::InvalidInput(format!(
                "conditional variances must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(NoiseProfile { sigma2, source })
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn source(&self) -> &NoiseSource {
        &self.source
    }

    fn require_positive(&self) -> Result<()> {
        if let Some(i) = self.sigma2.iter().position(|&s| s <= 0.0) {
            return Err(HlsError::InvalidInput(format!(
                "allocation optimization needs σ² > 0 everywhere; σ²({i}) = {}",
                self.sigma2[i]
            )));
        }
        Ok(())
    }

    fn check_len(&self, m: usize) -> Result<()> {
        if self.len() != m {
            return Err(HlsError::DimensionMismatch(format!(
                "{} variances for {m} design points",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllocationKind {
    Uniform,
    Neyman,
    AOptimal,
}

impl std::fmt::Display for AllocationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AllocationKind::Uniform => "uniform",
            AllocationKind::Neyman => "neyman",
            AllocationKind::AOptimal => "a-optimal",
        };
        f.write_str(s)
    }
}

/// A budget split over the design points.
#[derive(Clone, Debug)]
pub struct Allocation {
    p: Vec<f64>,
    delta: f64,
    kind: AllocationKind,
    /// `G(p)` at unit budget for uniform/Neyman, `H(p)` at the requested
    /// budget for A-optimal.
    objective_value: f64,
    /// Projected-gradient fixed-point residual; 0 for closed forms.
    kkt_residual: f64,
    tolerance_missed: bool,
    iterations: usize,
}

impl Allocation {
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> AllocationKind {
        self.kind
    }

    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    pub fn kkt_residual(&self) -> f64 {
        self.kkt_residual
    }

    /// Set when the A-optimal solver stopped on its iteration or decrease
    /// limits with the KKT residual still above 1e-8.
    pub fn tolerance_missed(&self) -> bool {
        self.tolerance_missed
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn validate(&self) -> Result<()> {
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(HlsError::Numerical(format!(
                "allocation mass {sum} deviates from 1"
            )));
        }
        if let Some(i) = self.p.iter().position(|&pi| pi < self.delta - 1e-15) {
            return Err(HlsError::Numerical(format!(
                "allocation entry {i} = {} below its bound δ = {}",
                self.p[i], self.delta
            )));
        }
        Ok(())
    }

    /// CSV export: `index,x1..xd,p,L_i` plus a sidecar with kind, δ,
    /// objective, and KKT residual.
    pub fn save(
        &self,
        design: &SampleDesign,
        counts: &[usize],
        path: &std::path::Path,
    ) -> Result<()> {
        let d = design.dim();
        let mut header = vec!["index".to_string()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        header.push("p".into());
        header.push("L_i".into());
        let rows: Vec<Vec<String>> = (0..self.m())
            .map(|i| {
                let mut row = vec![i.to_string()];
                row.extend(design.points()[i].iter().map(|&c| crate::table::fmt_f64(c)));
                row.push(crate::table::fmt_f64(self.p[i]));
                row.push(counts[i].to_string());
                row
            })
            .collect();
        crate::table::write_text_csv(path, &header.join(","), &rows)?;
        let meta = format!(
            "kind={}\ndelta={}\nobjective={}\nkkt_residual={}\ntolerance_missed={}\n",
            self.kind,
            crate::table::fmt_f64(self.delta),
            crate::table::fmt_f64(self.objective_value),
            crate::table::fmt_f64(self.kkt_residual),
            self.tolerance_missed
        );
        let sidecar = path.with_extension("meta.txt");
        std::fs::write(&sidecar, meta).map_err(|e| HlsError::Io {
            path: sidecar.display().to_string(),
            source: e,
        })
    }
}

// ---------------------------------------------------------------------------
// Closed-form allocations and objectives
// ---------------------------------------------------------------------------

/// Equal share per design point.
pub fn uniform_allocation(design: &SampleDesign, noise: &NoiseProfile) -> Result<Allocation> {
    noise.check_len(design.m())?;
    let m = design.m();
    let p = vec![1.0 / m as f64; m];
    let g = objective_g(&p, design, noise, 1);
    Ok(Allocation {
        p,
        delta: 0.0,
        kind: AllocationKind::Uniform,
        objective_value: g,
        kkt_residual: 0.0,
        tolerance_missed: false,
        iterations: 0,
    })
}

/// Closed-form Neyman allocation `p_i ∝ w_i·σ_i·√Φ_i`; minimizes `G`.
/// The stored objective is the unit-budget value `L·G(p)`.
pub fn neyman_allocation(design: &SampleDesign, noise: &NoiseProfile) -> Result<Allocation> {
    noise.check_len(design.m())?;
    noise.require_positive()?;
    let m = design.m();
    let mut p: Vec<f64> = (0..m)
        .map(|i| design.weights()[i] * noise.sigma2[i].sqrt() * design.phi(i).sqrt())
        .collect();
    let total: f64 = p.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(HlsError::Numerical(format!(
            "Neyman normalizer degenerate: {total}"
        )));
    }
    for v in p.iter_mut() {
        *v /= total;
    }
    let g = objective_g(&p, design, noise, 1);
    let alloc = Allocation {
        p,
        delta: 0.0,
        kind: AllocationKind::Neyman,
        objective_value: g,
        kkt_residual: 0.0,
        tolerance_missed: false,
        iterations: 0,
    };
    alloc.validate()?;
    Ok(alloc)
}

/// The Neyman surrogate objective
/// `G(p) = (1/L)·Σ_i w_i²·σ_i²·Φ_i/(m²·p_i)`; `+∞` when some noisy site
/// gets zero budget.
pub fn objective_g(p: &[f64], design: &SampleDesign, noise: &NoiseProfile, l: usize) -> f64 {
    let m = design.m() as f64;
    let mut acc = 0.0;
    for i in 0..design.m() {
        let num = design.weights()[i].powi(2) * noise.sigma2[i] * design.phi(i);
        if num == 0.0 {
            continue; // noiseless site contributes nothing regardless of p_i
        }
        if p[i] <= 0.0 {
            return f64::INFINITY;
        }
        acc += num / (m * m * p[i]);
    }
    acc / l as f64
}

/// Per-point scale factors `c_i = L·m/(w_i·σ_i²)` entering `U(p)`.
fn information_scales(design: &SampleDesign, noise: &NoiseProfile, l: usize) -> Vec<f64> {
    let m = design.m() as f64;
    (0..design.m())
        .map(|i| l as f64 * m / (design.weights()[i] * noise.sigma2[i]))
        .collect()
}

fn information_matrix(
    p: &[f64],
    design: &SampleDesign,
    scales: &[f64],
) -> DMatrix<f64> {
    let b = design.weighted_matrix();
    let (m, n) = (b.nrows(), b.ncols());
    let mut u = DMatrix::zeros(n, n);
    // U = Bᵀ·diag(c_i·p_i)·B, accumulated row by row.
    for i in 0..m {
        let s = scales[i] * p[i];
        if s == 0.0 {
            continue;
        }
        let row = b.row(i);
        for r in 0..n {
            let sr = s * row[r];
            for c in r..n {
                u[(r, c)] += sr * row[c];
            }
        }
    }
    for r in 0..n {
        for c in 0..r {
            u[(r, c)] = u[(c, r)];
        }
    }
    u
}

/// The A-optimality objective `H(p) = tr(U(p)⁻¹)` at budget `L`.
pub fn objective_h(
    p: &[f64],
    design: &SampleDesign,
    noise: &NoiseProfile,
    l: usize,
) -> Result<f64> {
    noise.check_len(design.m())?;
    noise.require_positive()?;
    let scales = information_scales(design, noise, l);
    let u = information_matrix(p, design, &scales);
    let chol = Cholesky::new(u).ok_or_else(|| {
        HlsError::Numerical("information matrix U(p) is not positive definite".into())
    })?;
    Ok(inverse_trace(&chol))
}

/// `H(p)` together with its exact gradient `∂H/∂p_i = −c_i·‖U⁻¹a_i‖²`.
pub fn objective_h_gradient(
    p: &[f64],
    design: &SampleDesign,
    noise: &NoiseProfile,
    l: usize,
) -> Result<(f64, Vec<f64>)> {
    noise.check_len(design.m())?;
    noise.require_positive()?;
    let scales = information_scales(design, noise, l);
    let u = information_matrix(p, design, &scales);
    let chol = Cholesky::new(u).ok_or_else(|| {
        HlsError::Numerical("information matrix U(p) is not positive definite".into())
    })?;
    let h = inverse_trace(&chol);
    // X = U⁻¹Bᵀ, columns U⁻¹a_i.
    let x = chol.solve(&design.weighted_matrix().transpose());
    let grad: Vec<f64> = (0..design.m())
        .map(|i| -scales[i] * x.column(i).norm_squared())
        .collect();
    Ok((h, grad))
}

fn inverse_trace(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    // tr(U⁻¹) = ‖L⁻¹‖_F² from U = LLᵀ.
    let n = chol.l_dirty().nrows();
    let inv = chol.solve(&DMatrix::identity(n, n));
    inv.trace()
}

// ---------------------------------------------------------------------------
// Simplex projection
// ---------------------------------------------------------------------------

/// Exact Euclidean projection onto `{p : Σp = 1, p_i ≥ delta}` by the
/// sorted-threshold algorithm applied to the δ-shifted simplex. Entries at
/// the bound come out exactly equal to `delta`.
pub fn project_onto_simplex(v: &[f64], delta: f64) -> Result<Vec<f64>> {
    let m = v.len();
    if m == 0 {
        return Err(HlsError::InvalidInput("cannot project an empty vector".into()));
    }
    let slack = 1.0 - m as f64 * delta;
    if delta < 0.0 || slack < -1e-15 {
        return Err(HlsError::InvalidInput(format!(
            "infeasible bound: m·δ = {} exceeds 1",
            m as f64 * delta
        )));
    }
    if slack <= 0.0 {
        return Ok(vec![delta; m]);
    }
    let mut u: Vec<f64> = v.iter().map(|&vi| vi - delta).collect();
    let mut sorted = u.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in sorted.iter().enumerate() {
        cum += uk;
        let t = (cum - slack) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for ui in u.iter_mut() {
        *ui = (*ui - tau).max(0.0) + delta;
    }
    // Kill residual roundoff in the mass so downstream Σp = 1 checks at
    // 1e-12 hold exactly.
    let sum: f64 = u.iter().sum();
    let err = sum - 1.0;
    if err != 0.0 {
        // Adjust the largest entry; it is strictly above delta when slack>0.
        let argmax = u
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        u[argmax] -= err;
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// A-optimal solver
// ---------------------------------------------------------------------------

const MAX_ITERS: usize = 100_000;
const KKT_TOL: f64 = 1e-8;
const REL_DECREASE_TOL: f64 = 1e-12;

/// Minimizes `H` over `P_m(δ)` by projected gradient descent with
/// Barzilai–Borwein step sizes and Armijo backtracking, warm-started at the
/// Neyman point projected into the feasible set. After convergence a
/// null-direction sweep moves mass off any excess support without changing
/// `H`, recovering the sparse optimizer the support bound speaks about.
pub fn a_optimal_allocation(
    design: &SampleDesign,
    noise: &NoiseProfile,
    l: usize,
    delta: f64,
) -> Result<Allocation> {
    noise.check_len(design.m())?;
    noise.require_positive()?;
    let m = design.m();
    if !(delta > 0.0 && delta <= 1.0 / m as f64) {
        return Err(HlsError::InvalidInput(format!(
            "delta must lie in (0, 1/m]; got {delta} with m = {m}"
        )));
    }
    let smin = *design.singular_values().last().unwrap();
    if smin <= 1e-12 * design.singular_values()[0] {
        return Err(HlsError::RankDeficient(
            "weighted design matrix is rank deficient; A-optimal design undefined".into(),
        ));
    }
    let scales = information_scales(design, noise, l);

    let neyman = neyman_allocation(design, noise)?;
    let mut p = project_onto_simplex(neyman.p(), delta)?;

    let eval = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let u = information_matrix(p, design, &scales);
        let chol = Cholesky::new(u).ok_or_else(|| {
            HlsError::Numerical("U(p) lost positive definiteness".into())
        })?;
        let h = inverse_trace(&chol);
        let x = chol.solve(&design.weighted_matrix().transpose());
        let grad = (0..m).map(|i| -scales[i] * x.column(i).norm_squared()).collect();
        Ok((h, grad))
    };

    let (mut h, mut grad) = eval(&p)?;
    let mut step = 1.0 / grad.iter().fold(0.0f64, |a, &g| a.max(g.abs())).max(1e-300);
    let mut converged = kkt_residual(&p, &grad, delta)? <= KKT_TOL;
    let mut iters = 0;
    let mut stalled = 0;

    while !converged && iters < MAX_ITERS {
        iters += 1;
        // Armijo backtracking along the projected-gradient path.
        let mut t = step.clamp(1e-14, 1e14);
        let mut moved = false;
        for _ in 0..70 {
            let trial: Vec<f64> = p.iter().zip(&grad).map(|(&pi, &gi)| pi - t * gi).collect();
            let trial = project_onto_simplex(&trial, delta)?;
            let (h_t, grad_t) = eval(&trial)?;
            let dir_dot: f64 = trial
                .iter()
                .zip(&p)
                .zip(&grad)
                .map(|((&ti, &pi), &gi)| gi * (ti - pi))
                .sum();
            if h_t <= h + 1e-4 * dir_dot {
                // Barzilai–Borwein step for the next iteration.
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..m {
                    let si = trial[i] - p[i];
                    let yi = grad_t[i] - grad[i];
                    ss += si * si;
                    sy += si * yi;
                }
                step = if sy > 1e-300 { ss / sy } else { t * 2.0 };
                let rel_dec = (h - h_t).abs() / h.abs().max(1e-300);
                stalled = if rel_dec < REL_DECREASE_TOL { stalled + 1 } else { 0 };
                p = trial;
                grad = grad_t;
                h = h_t;
                moved = true;
                converged = kkt_residual(&p, &grad, delta)? <= KKT_TOL;
                break;
            }
            t *= 0.5;
        }
        // A failed line search means the projected path is numerically
        // stationary; a long stall means the objective has bottomed out.
        if !moved || stalled >= 20 {
            break;
        }
    }

    // Support-sparsifying sweep: move along null directions of the active
    // information constraints until no excess support remains; H unchanged.
    sparsify_support(&mut p, design, &scales, delta);
    let (h_final, grad_final) = eval(&p)?;
    let kkt_final = kkt_residual(&p, &grad_final, delta)?;

    let alloc = Allocation {
        p,
        delta,
        kind: AllocationKind::AOptimal,
        objective_value: h_final,
        kkt_residual: kkt_final,
        tolerance_missed: !converged && kkt_final > KKT_TOL,
        iterations: iters,
    };
    alloc.validate()?;
    Ok(alloc)
}

/// Unit-step projected-gradient fixed-point residual
/// `‖p − Π(p − ∇H(p))‖₂`; zero exactly at KKT points.
fn kkt_residual(p: &[f64], grad: &[f64], delta: f64) -> Result<f64> {
    let moved: Vec<f64> = p.iter().zip(grad).map(|(&pi, &gi)| pi - gi).collect();
    let proj = project_onto_simplex(&moved, delta)?;
    Ok(p.iter().zip(&proj).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// If more than `(n²+n)/2` entries sit strictly above δ, the rank of the
/// vectorized constraint set admits a direction ζ with `Σζ = 0` and
/// `Σζ_i·c_i·a_i·a_iᵀ = 0`; moving along it changes neither feasibility nor
/// `H`, and the step length is chosen so a support entry lands exactly on δ.
fn sparsify_support(p: &mut [f64], design: &SampleDesign, scales: &[f64], delta: f64) {
    let n = design.n();
    let bound = (n * n + n) / 2;
    let b = design.weighted_matrix();
    for _ in 0..p.len() {
        let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > delta).collect();
        if support.len() <= bound {
            return;
        }
        // Columns: c_i·vech(a_i a_iᵀ) stacked over a row of ones (Σζ = 0).
        let rows = bound + 1;
        let mut mat = DMatrix::zeros(rows, support.len());
        for (col, &i) in support.iter().enumerate() {
            let a = b.row(i);
            let mut r = 0;
            for j in 0..n {
                for k in j..n {
                    mat[(r, col)] = scales[i] * a[j] * a[k];
                    r += 1;
                }
            }
            mat[(rows - 1, col)] = 1.0;
        }
        let svd = mat.clone().svd(false, true);
        let vt = svd.v_t.as_ref().unwrap();
        let smax = svd.singular_values.max();
        // Smallest right singular vector; only useful if it is genuinely in
        // the null space.
        let last = svd.singular_values.len() - 1;
        if vt.nrows() <= last || svd.singular_values[last] > 1e-10 * smax.max(1e-300) {
            return;
        }
        let zeta: Vec<f64> = (0..support.len()).map(|c| vt[(last, c)]).collect();
        // Step to the first coordinate hitting δ, in the direction where
        // that happens.
        let mut t_pos = f64::INFINITY;
        let mut t_neg = f64::INFINITY;
        for (c, &i) in support.iter().enumerate() {
            if zeta[c] < -1e-14 {
                t_pos = t_pos.min((p[i] - delta) / -zeta[c]);
            }
            if zeta[c] > 1e-14 {
                t_neg = t_neg.min((p[i] - delta) / zeta[c]);
            }
        }
        let t = if t_pos.is_finite() { t_pos } else { -t_neg };
        if !t.is_finite() || t == 0.0 {
            return;
        }
        for (c, &i) in support.iter().enumerate() {
            p[i] += t * zeta[c];
            if p[i] < delta + 1e-14 {
                p[i] = delta;
            }
        }
        // Restore exact unit mass on the largest entry.
        let sum: f64 = p.iter().sum();
        let err = sum - 1.0;
        if err != 0.0 {
            let argmax = (0..p.len())
                .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
                .unwrap();
            p[argmax] -= err;
        }
    }
}

/// Number of entries strictly above the allocation's lower bound δ.
pub fn support_sparsity(alloc: &Allocation) -> usize {
    alloc.p.iter().filter(|&&pi| pi > alloc.delta).count()
}

/// Discrete condition number `J = max(w·σ²)·max(1/(w·σ²))` of the weighted
/// noise profile; controls how far the Neyman point can sit from the
/// feasible set's δ-boundary.
pub fn condition_j(design: &SampleDesign, noise: &NoiseProfile) -> Result<f64> {
    noise.check_len(design.m())?;
    noise.require_positive()?;
    let vals: Vec<f64> = (0..design.m())
        .map(|i| design.weights()[i] * noise.sigma2[i])
        .collect();
    let max = vals.iter().cloned().fold(f64::MIN, f64::max);
    let max_inv = vals.iter().map(|v| 1.0 / v).fold(f64::MIN, f64::max);
    Ok(max * max_inv)
}

/// Integer evaluation counts: `L_i = ⌊p_i·L⌋` plus largest-remainder
/// correction so `ΣL_i = L` exactly, then a minimum of one evaluation at
/// every supported point (taken from the largest counts).
pub fn integerize(alloc: &Allocation, l: usize) -> Result<Vec<usize>> {
    let m = alloc.m();
    let support: Vec<bool> = alloc.p.iter().map(|&pi| pi > 0.0).collect();
    let needed = support.iter().filter(|&&s| s).count();
    if l < needed {
        return Err(HlsError::InvalidInput(format!(
            "budget L = {l} cannot give {needed} supported points one evaluation each"
        )));
    }
    let mut counts: Vec<usize> = alloc.p.iter().map(|&pi| (pi * l as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = (0..m)
        .map(|i| (i, alloc.p[i] * l as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(l - assigned) {
        counts[remainders[k % m].0] += 1;
    }
    // Promote empty supported points, demoting the currently largest counts.
    loop {
        let Some(zero) = (0..m).find(|&i| support[i] && counts[i] == 0) else {
            break;
        };
        let donor = (0..m)
            .max_by_key(|&i| counts[i])
            .expect("nonempty counts");
        if counts[donor] <= 1 {
            return Err(HlsError::InvalidInput(format!(
                "budget L = {l} too small to cover the allocation support"
            )));
        }
        counts[donor] -= 1;
        counts[zero] += 1;
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), l);
    Ok(counts)
}
