//! Orthonormal approximation subspaces V_n and their Christoffel profiles.
//!
//! Two constructions are supported. `tensor_legendre_basis` builds the
//! closed-form tensor product of normalized Legendre polynomials on
//! `[-1,1]^d`, orthonormal under the uniform probability measure.
//! `discretize_basis` orthonormalizes arbitrary function snapshots against
//! the empirical measure of a Q-point grid via Householder QR, which is how
//! data-driven (random-subspace) bases enter the pipeline.
//!
//! Scaling convention for grid bases: with uniform grid weights the Q×n
//! value matrix `B` of the orthonormal basis satisfies `BᵀB = Q·I`, i.e. the
//! discrete inner product is `(1/Q)·Σ_q u(x_q)v(x_q)`. The QR factor is kept
//! as the change-of-basis map `T` with `A = B·T` (snapshot values `A`), so
//! snapshot coefficients β and orthonormal coefficients α relate by
//! `α = T·β`. Signs are normalized so `diag(T) > 0`.

use crate::domain::HyperRectangle;
use crate::error::{HlsError, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// A scalar function usable as a basis generator or field snapshot.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Orthonormal basis of an n-dimensional subspace, either continuous
/// (tensor Legendre under uniform μ) or discrete (orthonormal under a grid
/// measure).
#[derive(Clone)]
pub struct BasisSet {
    kind: BasisKind,
    n: usize,
    provenance: String,
}

#[derive(Clone)]
enum BasisKind {
    TensorLegendre { dim: usize, degree: usize },
    Grid(Arc<GridBasis>),
}

/// Grid-discretized orthonormal basis produced by [`discretize_basis`].
pub struct GridBasis {
    grid: Vec<Vec<f64>>,
    /// Discrete measure weights per grid point (sum to 1).
    weights: Vec<f64>,
    /// Q×n orthonormal value matrix: `Σ_q weights_q·B[q,i]·B[q,j] = δ_ij`.
    ortho: DMatrix<f64>,
    /// Upper-triangular change of basis, `α = to_ortho · β`.
    to_ortho: DMatrix<f64>,
    /// Inverse map, `β = from_ortho · α`.
    from_ortho: DMatrix<f64>,
    /// Raw snapshot functions; empty for bases re-loaded from disk, in which
    /// case evaluation is only possible on the grid itself.
    snapshots: Vec<ScalarFn>,
    /// Christoffel function at each grid point, `Φ_q = Σ_i B[q,i]²`.
    phi: Vec<f64>,
}

impl std::fmt::Debug for GridBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridBasis")
            .field("q", &self.grid.len())
            .field("n", &self.ortho.ncols())
            .field("has_snapshots", &!self.snapshots.is_empty())
            .finish()
    }
}

impl std::fmt::Debug for BasisSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BasisSet({})", self.provenance)
    }
}

impl BasisSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BasisKind::TensorLegendre { dim, .. } => *dim,
            BasisKind::Grid(g) => g.grid[0].len(),
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.kind, BasisKind::Grid(_))
    }

    pub fn grid(&self) -> Option<&GridBasis> {
        match &self.kind {
            BasisKind::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Tensor-Legendre degree, if this is a tensor basis.
    pub fn degree(&self) -> Option<usize> {
        match &self.kind {
            BasisKind::TensorLegendre { degree, .. } => Some(*degree),
            _ => None,
        }
    }

    /// Values `(v_1(x), …, v_n(x))`.
    ///
    /// Panics if a disk-loaded grid basis (no snapshot closures) is evaluated
    /// off its own grid; every basis built in-process evaluates anywhere.
    pub fn evaluate(&self, x: &[f64]) -> DVector<f64> {
        match &self.kind {
            BasisKind::TensorLegendre { dim, degree } => {
                debug_assert_eq!(x.len(), *dim);
                tensor_legendre_values(*degree, x)
            }
            BasisKind::Grid(g) => g.evaluate(x),
        }
    }

    /// Christoffel function `Φ_n(x) = Σ_i v_i(x)²`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.kind {
            // Product structure avoids materializing all n values.
            BasisKind::TensorLegendre { dim, degree } => {
                debug_assert_eq!(x.len(), *dim);
                x.iter().map(|&t| phi1(*degree, t)).product()
            }
            BasisKind::Grid(g) => g.evaluate(x).norm_squared(),
        }
    }
}

/// Christoffel profile of a basis: `Φ_n` and the sampling weight
/// `w = n/Φ_n`. The induced probability measure is `dν = (Φ_n/n)·dμ`.
#[derive(Clone, Debug)]
pub struct ChristoffelProfile {
    basis: Arc<BasisSet>,
}

impl ChristoffelProfile {
    pub fn phi(&self, x: &[f64]) -> f64 {
        self.basis.phi(x)
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        self.basis.n() as f64 / self.basis.phi(x)
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }
}

/// Builds the Christoffel profile of a basis.
pub fn christoffel(basis: &Arc<BasisSet>) -> ChristoffelProfile {
    ChristoffelProfile { basis: Arc::clone(basis) }
}

// ---------------------------------------------------------------------------
// Tensor Legendre
// ---------------------------------------------------------------------------

/// Normalized Legendre values `√(2k+1)·P_k(t)` for `k = 0..=degree`,
/// orthonormal on `[-1,1]` under the uniform probability measure.
pub(crate) fn legendre_normalized(degree: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut p0 = 1.0;
    out.push(1.0);
    if degree == 0 {
        return out;
    }
    let mut p1 = t;
    out.push(3f64.sqrt() * p1);
    for k in 1..degree {
        let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
        out.push(((2 * (k + 1) + 1) as f64).sqrt() * p2);
        p0 = p1;
        p1 = p2;
    }
    out
}

/// Univariate Christoffel sum `Σ_{k≤D} (2k+1)·P_k(t)²`.
pub(crate) fn phi1(degree: usize, t: f64) -> f64 {
    legendre_normalized(degree, t).iter().map(|v| v * v).sum()
}

fn tensor_legendre_values(degree: usize, x: &[f64]) -> DVector<f64> {
    let d = x.len();
    let per_dim: Vec<Vec<f64>> = x.iter().map(|&t| legendre_normalized(degree, t)).collect();
    let n = (degree + 1).pow(d as u32);
    let mut out = DVector::zeros(n);
    // Multi-index (k_1,…,k_d) in lexicographic order, last coordinate fastest.
    let mut idx = vec![0usize; d];
    for slot in 0..n {
        let mut v = 1.0;
        for j in 0..d {
            v *= per_dim[j][idx[j]];
        }
        out[slot] = v;
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] <= degree {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}

/// Tensor-product Legendre basis on `[-1,1]^d`: `n = (D+1)^d` functions,
/// each a product of normalized univariate Legendre polynomials
/// `√(2k+1)·P_k`. Multi-indices are enumerated lexicographically with the
/// last coordinate varying fastest.
pub fn tensor_legendre_basis(domain: &HyperRectangle, max_degree: usize) -> Result<Arc<BasisSet>> {
    let d = domain.dim();
    let sym = HyperRectangle::symmetric_cube(d);
    if *domain != sym {
        return Err(HlsError::InvalidInput(format!(
            "tensor Legendre basis requires the domain [-1,1]^{d}"
        )));
    }
    let n = (max_degree + 1)
        .checked_pow(d as u32)
        .filter(|&n| n <= 1 << 22)
        .ok_or_else(|| {
            HlsError::InvalidInput(format!(
                "basis dimension (D+1)^d overflows for D={max_degree}, d={d}"
            ))
        })?;
    Ok(Arc::new(BasisSet {
        kind: BasisKind::TensorLegendre { dim: d, degree: max_degree },
        n,
        provenance: format!("tensor-legendre(d={d}, D={max_degree})"),
    }))
}

// ---------------------------------------------------------------------------
// Grid discretization
// ---------------------------------------------------------------------------

impl GridBasis {
    pub fn q(&self) -> usize {
        self.grid.len()
    }

    pub fn n(&self) -> usize {
        self.ortho.ncols()
    }

    pub fn grid_points(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn grid_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Orthonormal value matrix (Q×n).
    pub fn ortho_values(&self) -> &DMatrix<f64> {
        &self.ortho
    }

    /// Change of basis: orthonormal coefficients from snapshot coefficients.
    pub fn to_ortho(&self) -> &DMatrix<f64> {
        &self.to_ortho
    }

    /// Inverse change of basis: snapshot coefficients from orthonormal ones.
    pub fn from_ortho(&self) -> &DMatrix<f64> {
        &self.from_ortho
    }

    pub fn snapshots(&self) -> &[ScalarFn] {
        &self.snapshots
    }

    /// Christoffel values on the grid.
    pub fn phi_on_grid(&self) -> &[f64] {
        &self.phi
    }

    /// Row of the orthonormal value matrix as a vector.
    pub fn ortho_row(&self, q: usize) -> DVector<f64> {
        self.ortho.row(q).transpose()
    }

    fn evaluate(&self, x: &[f64]) -> DVector<f64> {
        if self.snapshots.is_empty() {
            // Values-only basis (re-loaded from disk): grid lookup only.
            if let Some(q) = self.grid.iter().position(|p| p.as_slice() == x) {
                return self.ortho_row(q);
            }
            panic!(
                "grid basis without snapshot functions can only be evaluated \
                 at its own grid points"
            );
        }
        let g = DVector::from_iterator(
            self.snapshots.len(),
            self.snapshots.iter().map(|s| s(x)),
        );
        // v(x) = T^{-T}·g(x) so that α·v ≡ β·g when α = T·β.
        &self.from_ortho.transpose() * g
    }
}

/// Orthonormalizes `snapshots` against the empirical measure of `grid`
/// (optionally weighted; weights are normalized to sum to 1). Returns a grid
/// [`BasisSet`] carrying the change-of-basis maps in both directions.
///
/// Errors with the deficient column count if the snapshot matrix has
/// numerical rank < n at tolerance `1e-10`× (largest singular value); the
/// caller may retry with fresh snapshots.
pub fn discretize_basis(
    snapshots: Vec<ScalarFn>,
    grid: Vec<Vec<f64>>,
    measure_weights: Option<Vec<f64>>,
) -> Result<Arc<BasisSet>> {
    let n = snapshots.len();
    let q = grid.len();
    if n == 0 {
        return Err(HlsError::InvalidInput("need at least one snapshot".into()));
    }
    if q < n {
        return Err(HlsError::InvalidInput(format!(
            "grid has {q} points but {n} snapshots; need Q >= n"
        )));
    }
    let weights = match measure_weights {
        Some(w) => {
            if w.len() != q {
                return Err(HlsError::DimensionMismatch(format!(
                    "{} measure weights for {q} grid points",
                    w.len()
                )));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || w.iter().any(|&wi| wi < 0.0) {
                return Err(HlsError::InvalidInput(
                    "measure weights must be nonnegative with positive sum".into(),
                ));
            }
            w.iter().map(|wi| wi / total).collect::<Vec<_>>()
        }
        None => vec![1.0 / q as f64; q],
    };

    // Snapshot values over the grid, rows scaled by √weight so that plain QR
    // orthonormalizes in the discrete inner product.
    let rows: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|x| snapshots.iter().map(|s| s(x)).collect())
        .collect();
    for (qi, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(HlsError::NonFinite(format!(
                "snapshot {j} is non-finite at grid point {qi}"
            )));
        }
    }
    let mut scaled = DMatrix::zeros(q, n);
    for (qi, row) in rows.iter().enumerate() {
        let s = weights[qi].sqrt();
        for (j, &v) in row.iter().enumerate() {
            scaled[(qi, j)] = s * v;
        }
    }

    let qr = scaled.qr();
    let mut qthin = qr.q();
    let mut r = qr.r();

    // Rank check on R's singular values.
    let sv = r.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let deficient = sv.iter().filter(|&&s| s <= 1e-10 * smax).count();
    if deficient > 0 || smax == 0.0 {
        return Err(HlsError::RankDeficient(format!(
            "{deficient} of {n} snapshot directions are numerically dependent \
             (tolerance 1e-10 relative)"
        )));
    }

    // Normalize signs so diag(R) > 0; then orthonormal inputs map to the
    // identity change of basis.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for c in 0..n {
                r[(j, c)] = -r[(j, c)];
            }
            for row in 0..q {
                qthin[(row, j)] = -qthin[(row, j)];
            }
        }
    }

    // B = diag(1/√weight)·Q_thin has Σ_q w_q B[q,i]B[q,j] = δ_ij.
    let mut ortho = qthin;
    for qi in 0..q {
        let s = 1.0 / weights[qi].sqrt();
        for j in 0..n {
            ortho[(qi, j)] *= s;
        }
    }
    let from_ortho = r.clone().try_inverse().ok_or_else(|| {
        HlsError::Numerical("triangular change-of-basis factor not invertible".into())
    })?;
    let phi = (0..q).map(|qi| ortho.row(qi).norm_squared()).collect();

    let gb = GridBasis {
        grid,
        weights,
        ortho,
        to_ortho: r,
        from_ortho,
        snapshots,
        phi,
    };
    Ok(Arc::new(BasisSet {
        n,
        provenance: format!("grid(Q={q}, n={n})"),
        kind: BasisKind::Grid(Arc::new(gb)),
    }))
}

// ---------------------------------------------------------------------------
// Persistence (values-only round trip)
// ---------------------------------------------------------------------------

/// Writes the grid points, the Q×n orthonormal value matrix, the
/// change-of-basis matrix, and a metadata sidecar into `dir`.
pub fn save_grid_basis(basis: &BasisSet, dir: &std::path::Path) -> Result<()> {
    let g = basis.grid().ok_or_else(|| {
        HlsError::InvalidInput("only grid bases can be persisted".into())
    })?;
    std::fs::create_dir_all(dir).map_err(|e| HlsError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let dim = basis.dim();
    let header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    crate::table::write_csv(
        &dir.join("grid.csv"),
        &header.join(","),
        g.grid.iter().map(|p| p.as_slice()),
    )?;
    crate::table::write_matrix_csv(&dir.join("basis.csv"), &g.ortho)?;
    crate::table::write_matrix_csv(&dir.join("change_of_basis.csv"), &g.to_ortho)?;
    let meta = format!(
        "kind=grid-basis\nn={}\nq={}\ndim={}\nprovenance={}\n",
        basis.n(),
        g.q(),
        dim,
        basis.provenance()
    );
    std::fs::write(dir.join("meta.txt"), meta).map_err(|e| HlsError::Io {
        path: dir.join("meta.txt").display().to_string(),
        source: e,
    })
}

/// Reads a persisted grid basis back. The result carries values but not the
/// original snapshot closures, so it evaluates only on its own grid.
pub fn load_grid_basis(dir: &std::path::Path) -> Result<Arc<BasisSet>> {
    let grid = crate::table::read_csv(&dir.join("grid.csv"))?;
    let ortho = crate::table::read_matrix_csv(&dir.join("basis.csv"))?;
    let to_ortho = crate::table::read_matrix_csv(&dir.join("change_of_basis.csv"))?;
    let q = grid.len();
    let n = ortho.ncols();
    if q == 0 || ortho.nrows() != q || to_ortho.nrows() != n || to_ortho.ncols() != n {
        return Err(HlsError::InvalidInput(format!(
            "inconsistent persisted basis: {} grid rows, {}x{} matrix, {}x{} map",
            q,
            ortho.nrows(),
            n,
            to_ortho.nrows(),
            to_ortho.ncols()
        )));
    }
    let from_ortho = to_ortho.clone().try_inverse().ok_or_else(|| {
        HlsError::Numerical("persisted change-of-basis factor not invertible".into())
    })?;
    let phi = (0..q).map(|qi| ortho.row(qi).norm_squared()).collect();
    let gb = GridBasis {
        weights: vec![1.0 / q as f64; q],
        grid,
        ortho,
        to_ortho,
        from_ortho,
        snapshots: Vec::new(),
        phi,
    };
    Ok(Arc::new(BasisSet {
        n,
        provenance: format!("grid(Q={q}, n={n}, loaded)"),
        kind: BasisKind::Grid(Arc::new(gb)),
    }))
}

/// Reattaches raw snapshot closures to a grid basis restored by
/// [`load_grid_basis`], giving back off-grid evaluation.
///
/// The closures must be the same family, in the same order, that produced
/// the persisted basis. This is spot-checked by re-evaluating the snapshots
/// on a few grid rows and comparing against `ortho · to_ortho` (the stored
/// raw values); a mismatch means the caller rebuilt the wrong family.
pub fn attach_snapshots(basis: &BasisSet, snapshots: Vec<ScalarFn>) -> Result<Arc<BasisSet>> {
    let g = basis.grid().ok_or_else(|| {
        HlsError::InvalidInput("snapshots can only be attached to a grid basis".into())
    })?;
    let n = basis.n();
    if snapshots.len() != n {
        return Err(HlsError::DimensionMismatch(format!(
            "{} snapshots for an n = {n} basis",
            snapshots.len()
        )));
    }
    let q = g.q();
    for qi in (0..q).step_by((q / 7).max(1)) {
        let x = &g.grid[qi];
        for (k, snap) in snapshots.iter().enumerate() {
            let stored: f64 = (0..n).map(|j| g.ortho[(qi, j)] * g.to_ortho[(j, k)]).sum();
            let fresh = snap(x);
            if (fresh - stored).abs() > 1e-8 * (1.0 + stored.abs()) {
                return Err(HlsError::InvalidInput(format!(
                    "snapshot {k} disagrees with the stored basis at grid row {qi}: \
                     {fresh} vs {stored}"
                )));
            }
        }
    }
    let gb = GridBasis {
        grid: g.grid.clone(),
        weights: g.weights.clone(),
        ortho: g.ortho.clone(),
        to_ortho: g.to_ortho.clone(),
        from_ortho: g.from_ortho.clone(),
        snapshots,
        phi: g.phi.clone(),
    };
    Ok(Arc::new(BasisSet {
        n,
        provenance: basis.provenance().to_string(),
        kind: BasisKind::Grid(Arc::new(gb)),
    }))
}
