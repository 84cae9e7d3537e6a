//! Approximation domains, product measures, and point generation.
//!
//! Everything downstream works on a hyper-rectangle `Ω ⊂ ℝ^d` carrying a
//! product probability measure `μ` (uniform marginals; the type keeps a
//! per-dimension descriptor so other marginals can be added later). Design
//! points, quadrature grids, and Monte Carlo test sets all originate here,
//! either from a [`PointStream`] (seeded i.i.d., Halton, or scrambled Sobol)
//! or from tensorized Gauss–Legendre quadrature.
//!
//! Streams emit points in the unit cube `[0,1)^d`; affine mapping into the
//! domain is a separate, explicit step so that inverse-CDF sampling can
//! intercept the unit-cube coordinates.

use crate::error::{HlsError, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Axis-aligned box `[lower_1, upper_1] × … × [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(HlsError::DimensionMismatch(format!(
                "bound vectors must be nonempty and equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(HlsError::InvalidInput(format!(
                    "domain bounds must satisfy lower < upper and be finite; \
                     dimension {j} has [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The symmetric cube `[-1,1]^d` used by tensor polynomial bases.
    pub fn symmetric_cube(dim: usize) -> Self {
        Self::new(vec![-1.0; dim], vec![1.0; dim]).expect("valid static bounds")
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit_cube(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim]).expect("valid static bounds")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Affine map of a unit-cube point into the box.
    pub fn map_from_unit(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.dim());
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ui, (lo, hi))| lo + ui * (hi - lo))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }
}

/// Marginal density descriptor. Uniform is the only supported family; the
/// enum exists so that non-uniform marginals can be added without touching
/// call sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalDensity {
    Uniform,
}

impl MarginalDensity {
    /// Density value on `[lo, hi]` (as a probability density).
    fn density(&self, lo: f64, hi: f64, _t: f64) -> f64 {
        match self {
            MarginalDensity::Uniform => 1.0 / (hi - lo),
        }
    }
}

/// Product probability measure on a [`HyperRectangle`].
#[derive(Debug, Clone)]
pub struct ProductMeasure {
    domain: HyperRectangle,
    marginals: Vec<MarginalDensity>,
}

impl ProductMeasure {
    /// Builds the measure and verifies each marginal integrates to one
    /// (64-node Gauss–Legendre, tolerance 1e-10).
    pub fn new(domain: HyperRectangle, marginals: Vec<MarginalDensity>) -> Result<Self> {
        if marginals.len() != domain.dim() {
            return Err(HlsError::DimensionMismatch(format!(
                "{} marginals for a {}-dimensional domain",
                marginals.len(),
                domain.dim()
            )));
        }
        let (nodes, weights) = gauss_legendre(64);
        for (j, marg) in marginals.iter().enumerate() {
            let (lo, hi) = (domain.lower[j], domain.upper[j]);
            let half = 0.5 * (hi - lo);
            let mass: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&z, &wt)| wt * half * marg.density(lo, hi, lo + half * (z + 1.0)))
                .sum();
            if (mass - 1.0).abs() > 1e-10 {
                return Err(HlsError::Numerical(format!(
                    "marginal {j} integrates to {mass}, expected 1"
                )));
            }
        }
        Ok(Self { domain, marginals })
    }

    /// Uniform measure on the given box.
    pub fn uniform(domain: HyperRectangle) -> Self {
        let marginals = vec![MarginalDensity::Uniform; domain.dim()];
        Self::new(domain, marginals).expect("uniform marginals always normalize")
    }

    pub fn domain(&self) -> &HyperRectangle {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Joint density at a point of the domain.
    pub fn density(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &xj)| {
                self.marginals[j].density(self.domain.lower[j], self.domain.upper[j], xj)
            })
            .product()
    }
}

// ---------------------------------------------------------------------------
// Point streams
// ---------------------------------------------------------------------------

/// What drives a [`PointStream`].
#[derive(Debug, Clone)]
pub enum StreamKind {
    /// Seeded pseudo-random (ChaCha12) uniform draws.
    Iid { seed: u64 },
    /// Halton sequence with the given coprime bases (one per dimension),
    /// starting at index 1.
    Halton { bases: Vec<u32> },
    /// Sobol sequence with nested-permutation (Owen-style) scrambling plus a
    /// digital shift, both keyed by the seed.
    ScrambledSobol { seed: u64 },
}

/// Deterministic generator of points in the unit cube `[0,1)^d`.
///
/// Replay contract: a stream rebuilt with the same kind/seed/dimension emits
/// the identical sequence bit for bit. `substream(tag)` derives an
/// independent stream for parallel work; derived streams never overlap with
/// the parent (i.i.d./Sobol substreams re-key the generator, Halton
/// substreams jump to a reserved `2^20`-index block).
#[derive(Debug, Clone)]
pub struct PointStream {
    kind: StreamKind,
    dim: usize,
    rng: Option<ChaCha12Rng>,
    index: u64,
    sobol: Option<SobolState>,
}

impl PointStream {
    pub fn iid(seed: u64, dim: usize) -> Self {
        Self {
            kind: StreamKind::Iid { seed },
            dim,
            rng: Some(ChaCha12Rng::seed_from_u64(seed)),
            index: 0,
            sobol: None,
        }
    }

    pub fn halton(bases: &[u32]) -> Result<Self> {
        if bases.is_empty() {
            return Err(HlsError::InvalidInput("halton needs at least one base".into()));
        }
        for (j, &b) in bases.iter().enumerate() {
            if b < 2 {
                return Err(HlsError::InvalidInput(format!(
                    "halton base must be >= 2, dimension {j} has {b}"
                )));
            }
        }
        Ok(Self {
            kind: StreamKind::Halton { bases: bases.to_vec() },
            dim: bases.len(),
            rng: None,
            index: 1, // index 0 is the origin in every coordinate; skip it
            sobol: None,
        })
    }

    pub fn scrambled_sobol(seed: u64, dim: usize) -> Result<Self> {
        let sobol = SobolState::new(seed, dim)?;
        Ok(Self {
            kind: StreamKind::ScrambledSobol { seed },
            dim,
            rng: None,
            index: 0,
            sobol: Some(sobol),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Human-readable provenance for reports and design sidecars.
    pub fn provenance(&self) -> String {
        match &self.kind {
            StreamKind::Iid { seed } => format!("iid(seed={seed})"),
            StreamKind::Halton { bases } => format!("halton(bases={bases:?})"),
            StreamKind::ScrambledSobol { seed } => format!("scrambled-sobol(seed={seed})"),
        }
    }

    /// Next point of the unit cube.
    pub fn next_unit(&mut self) -> Vec<f64> {
        match &self.kind {
            StreamKind::Iid { .. } => {
                let rng = self.rng.as_mut().expect("iid stream carries an rng");
                (0..self.dim).map(|_| rng.gen::<f64>()).collect()
            }
            StreamKind::Halton { bases } => {
                let i = self.index;
                self.index += 1;
                bases.iter().map(|&b| radical_inverse(i, b)).collect()
            }
            StreamKind::ScrambledSobol { .. } => {
                let i = self.index;
                self.index += 1;
                self.sobol
                    .as_ref()
                    .expect("sobol stream carries state")
                    .point(i)
            }
        }
    }

    /// Draws `count` unit-cube points.
    pub fn take_unit(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_unit()).collect()
    }

    /// Independent stream derived from this one; `tag` selects the substream.
    pub fn substream(&self, tag: u64) -> Self {
        match &self.kind {
            StreamKind::Iid { seed } => Self::iid(mix_seed(*seed, tag), self.dim),
            StreamKind::Halton { bases } => {
                let mut s = Self::halton(bases).expect("bases already validated");
                s.index = self.index + (tag + 1) * (1 << 20);
                s
            }
            StreamKind::ScrambledSobol { seed } => {
                Self::scrambled_sobol(mix_seed(*seed, tag), self.dim)
                    .expect("dimension already validated")
            }
        }
    }

    /// A scalar uniform in `[0,1)`, consuming one point and keeping its first
    /// coordinate. Used by categorical samplers that only need one number.
    pub fn next_scalar(&mut self) -> f64 {
        self.next_unit()[0]
    }
}

/// SplitMix64-style mixing used to derive substream seeds.
pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

// ---------------------------------------------------------------------------
// Sobol with nested-permutation scrambling
// ---------------------------------------------------------------------------

/// Direction-number parameters (degree, primitive-polynomial coefficient,
/// initial m values) for the first Sobol dimensions after the van der Corput
/// dimension, in the conventional ordering.
const SOBOL_POLY: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

const SOBOL_BITS: usize = 32;
const SOBOL_MAX_DIM: usize = SOBOL_POLY.len() + 1;

#[derive(Debug, Clone)]
struct SobolState {
    /// direction[j][k]: k-th direction number of dimension j, as a 32-bit
    /// binary fraction.
    direction: Vec<[u32; SOBOL_BITS]>,
    /// Per-dimension scramble keys and digital shifts derived from the seed.
    keys: Vec<u64>,
    shifts: Vec<u32>,
}

impl SobolState {
    fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 || dim > SOBOL_MAX_DIM {
            return Err(HlsError::InvalidInput(format!(
                "sobol stream supports 1..={SOBOL_MAX_DIM} dimensions, got {dim}"
            )));
        }
        let mut direction = Vec::with_capacity(dim);
        // Dimension 0: van der Corput, v_k = 2^{-(k+1)}.
        let mut v0 = [0u32; SOBOL_BITS];
        for (k, v) in v0.iter_mut().enumerate() {
            *v = 1 << (31 - k);
        }
        direction.push(v0);
        for &(s, a, m_init) in SOBOL_POLY.iter().take(dim.saturating_sub(1)) {
            let s = s as usize;
            let mut v = [0u32; SOBOL_BITS];
            for k in 0..s.min(SOBOL_BITS) {
                v[k] = m_init[k] << (31 - k);
            }
            for k in s..SOBOL_BITS {
                let mut vk = v[k - s] ^ (v[k - s] >> s);
                for i in 1..s {
                    if (a >> (s - 1 - i)) & 1 == 1 {
                        vk ^= v[k - i];
                    }
                }
                v[k] = vk;
            }
            direction.push(v);
        }
        let keys = (0..dim).map(|j| mix_seed(seed, 0x50b0 + j as u64)).collect();
        let shifts = (0..dim)
            .map(|j| (mix_seed(seed, 0xd161 + j as u64) >> 32) as u32)
            .collect();
        Ok(Self { direction, keys, shifts })
    }

    /// Unscrambled Sobol integer for (index, dimension) via the Gray-code
    /// construction evaluated directly from the index bits.
    fn raw(&self, index: u64, j: usize) -> u32 {
        let gray = index ^ (index >> 1);
        let mut x = 0u32;
        let mut g = gray;
        let mut k = 0;
        while g != 0 && k < SOBOL_BITS {
            if g & 1 == 1 {
                x ^= self.direction[j][k];
            }
            g >>= 1;
            k += 1;
        }
        x
    }

    /// Nested-permutation scramble: bit `k` of the output flips according to
    /// a hash of the (dimension key, k, preceding output bits) triple, which
    /// realizes an Owen-style random binary tree of permutations. A digital
    /// shift is XORed on top so the origin is also randomized.
    fn scramble(&self, x: u32, j: usize) -> u32 {
        let key = self.keys[j];
        let mut out = 0u32;
        for k in 0..SOBOL_BITS {
            // k leading bits of x (the path through the permutation tree).
            let prefix = if k == 0 { 0 } else { (x >> (SOBOL_BITS - k)) as u64 };
            let flip = (mix_seed(key ^ prefix, k as u64) & 1) as u32;
            let bit = (x >> (31 - k)) & 1;
            out |= (bit ^ flip) << (31 - k);
        }
        out ^ self.shifts[j]
    }

    fn point(&self, index: u64) -> Vec<f64> {
        (0..self.direction.len())
            .map(|j| {
                let scrambled = self.scramble(self.raw(index, j), j);
                // Midpoint offset keeps points strictly inside (0,1).
                (scrambled as f64 + 0.5) * (1.0 / 4294967296.0)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Point generation and quadrature
// ---------------------------------------------------------------------------

/// Draws `count` points from the stream and maps them into the domain.
pub fn generate_points(
    stream: &mut PointStream,
    count: usize,
    domain: &HyperRectangle,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(HlsError::InvalidInput("count must be at least 1".into()));
    }
    if stream.dim() != domain.dim() {
        return Err(HlsError::DimensionMismatch(format!(
            "stream emits {}-dimensional points, domain is {}-dimensional",
            stream.dim(),
            domain.dim()
        )));
    }
    Ok((0..count)
        .map(|_| domain.map_from_unit(&stream.next_unit()))
        .collect())
}

/// Gauss–Legendre nodes and weights on `[-1,1]` (weights sum to 2).
///
/// Newton iteration on the three-term recurrence; accurate to machine
/// precision for any practical level.
pub fn gauss_legendre(level: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(level >= 1, "quadrature level must be positive");
    let n = level;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess for the i-th root of P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x) by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Tensorized Gauss–Legendre estimate of `∫ g dμ` with `level` nodes per
/// dimension. Exact for polynomials of per-dimension degree `≤ 2·level − 1`.
///
/// Non-finite integrand values are reported together with the offending
/// node. Grids beyond `10^8` total nodes are rejected; high-dimensional
/// integrals should use a discrete grid measure instead.
pub fn quadrature_integral<G>(g: G, measure: &ProductMeasure, level: usize) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    if level == 0 {
        return Err(HlsError::InvalidInput("quadrature level must be positive".into()));
    }
    let d = measure.dim();
    let total = (level as f64).powi(d as i32);
    if total > 1e8 {
        return Err(HlsError::InvalidInput(format!(
            "tensor quadrature with {level}^{d} nodes is infeasible; \
             use a discrete grid measure for high dimensions"
        )));
    }
    let (z, wz) = gauss_legendre(level);
    // Per-dimension nodes mapped into the domain with probability weights.
    let mut nodes = Vec::with_capacity(d);
    let mut weights = Vec::with_capacity(d);
    for j in 0..d {
        let (lo, hi) = (measure.domain.lower[j], measure.domain.upper[j]);
        let half = 0.5 * (hi - lo);
        let t: Vec<f64> = z.iter().map(|&zi| lo + half * (zi + 1.0)).collect();
        let w: Vec<f64> = wz
            .iter()
            .zip(&t)
            .map(|(&wi, &ti)| wi * half * measure.marginals[j].density(lo, hi, ti))
            .collect();
        nodes.push(t);
        weights.push(w);
    }
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut sum = 0.0;
    loop {
        let mut wt = 1.0;
        for j in 0..d {
            point[j] = nodes[j][idx[j]];
            wt *= weights[j][idx[j]];
        }
        let val = g(&point);
        if !val.is_finite() {
            return Err(HlsError::NonFinite(format!(
                "integrand returned {val} at node {point:?}"
            )));
        }
        sum += wt * val;
        // Odometer increment over the tensor grid.
        let mut j = 0;
        loop {
            if j == d {
                return Ok(sum);
            }
            idx[j] += 1;
            if idx[j] < level {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Convenience: i.i.d. standard-normal draw from a `RngCore`, used by noisy
/// oracles and field generators.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_bounds() {
        assert!(HyperRectangle::new(vec![0.0], vec![0.0]).is_err());
        assert!(HyperRectangle::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(HyperRectangle::new(vec![], vec![]).is_err());
    }

    #[test]
    fn affine_midpoint_maps_to_center() {
        let dom = HyperRectangle::symmetric_cube(1);
        assert_eq!(dom.map_from_unit(&[0.5]), vec![0.0]);
    }

    #[test]
    fn halton_base2_first_points() {
        let mut s = PointStream::halton(&[2]).unwrap();
        let pts = s.take_unit(3);
        assert_eq!(pts, vec![vec![0.5], vec![0.25], vec![0.75]]);
    }

    #[test]
    fn generate_points_validates_inputs() {
        let dom = HyperRectangle::unit_cube(2);
        let mut s = PointStream::iid(1, 2);
        assert!(generate_points(&mut s, 0, &dom).is_err());
        let mut s1 = PointStream::iid(1, 1);
        assert!(matches!(
            generate_points(&mut s1, 3, &dom),
            Err(HlsError::DimensionMismatch(_))
        ));
        let pts = generate_points(&mut s, 100, &dom).unwrap();
        assert!(pts.iter().all(|p| dom.contains(p)));
    }

    #[test]
    fn streams_replay_bit_exactly() {
        for mk in [
            || PointStream::iid(42, 3),
            || PointStream::halton(&[2, 3, 5]).unwrap(),
            || PointStream::scrambled_sobol(42, 3).unwrap(),
        ] {
            let a: Vec<_> = mk().take_unit(50);
            let b: Vec<_> = mk().take_unit(50);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn substreams_decorrelate() {
        let s = PointStream::iid(7, 2);
        let a = s.substream(0).take_unit(10);
        let b = s.substream(1).take_unit(10);
        assert_ne!(a, b);
        let sob = PointStream::scrambled_sobol(7, 2).unwrap();
        assert_ne!(sob.substream(0).take_unit(10), sob.substream(1).take_unit(10));
    }

    #[test]
    fn sobol_points_fill_unit_cube() {
        let mut s = PointStream::scrambled_sobol(9, 5).unwrap();
        let pts = s.take_unit(1 << 12);
        assert!(pts.iter().all(|p| p.iter().all(|&c| c > 0.0 && c < 1.0)));
        // Per-coordinate mean of a scrambled net is close to 1/2.
        for j in 0..5 {
            let mean: f64 = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
            assert_abs_diff_eq!(mean, 0.5, epsilon = 5e-3);
        }
    }

    #[test]
    fn sobol_rejects_unsupported_dimension() {
        assert!(PointStream::scrambled_sobol(1, 0).is_err());
        assert!(PointStream::scrambled_sobol(1, SOBOL_MAX_DIM + 1).is_err());
    }

    #[test]
    fn unscrambled_sobol_base_sequence() {
        // With scrambling and shift stripped, the first points of the raw
        // sequence are the classical (0, 1/2, 3/4, 1/4, ...) in dimension 0.
        let st = SobolState::new(0, 2).unwrap();
        let raw: Vec<f64> = (0..4).map(|i| st.raw(i, 0) as f64 / 4294967296.0).collect();
        assert_eq!(raw, vec![0.0, 0.5, 0.75, 0.25]);
        let raw1: Vec<f64> = (0..4).map(|i| st.raw(i, 1) as f64 / 4294967296.0).collect();
        assert_eq!(raw1, vec![0.0, 0.5, 0.25, 0.75]);
    }

    #[test]
    fn gauss_legendre_exactness() {
        // Degree 2*level-1 polynomials integrate exactly.
        let meas = ProductMeasure::uniform(HyperRectangle::symmetric_cube(1));
        for level in [1usize, 2, 5, 16, 64] {
            let deg = 2 * level - 1;
            let val = quadrature_integral(|x| x[0].powi(deg as i32), &meas, level).unwrap();
            let exact = 0.0; // odd degree over symmetric interval
            assert_abs_diff_eq!(val, exact, epsilon = 1e-12);
            if level >= 2 {
                let even = 2 * level - 2;
                let val = quadrature_integral(|x| x[0].powi(even as i32), &meas, level).unwrap();
                let exact = 1.0 / (even as f64 + 1.0); // ∫ x^k dx/2 on [-1,1]
                assert_abs_diff_eq!(val / exact, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_examples() {
        let meas = ProductMeasure::uniform(HyperRectangle::symmetric_cube(1));
        assert_abs_diff_eq!(quadrature_integral(|_| 1.0, &meas, 8).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            quadrature_integral(|x| x[0] * x[0], &meas, 8).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-14
        );
        let meas2 = ProductMeasure::uniform(HyperRectangle::symmetric_cube(2));
        assert_abs_diff_eq!(
            quadrature_integral(|x| x[0] * x[1], &meas2, 8).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn quadrature_reports_nonfinite_integrand() {
        let meas = ProductMeasure::uniform(HyperRectangle::unit_cube(1));
        let err = quadrature_integral(|x| 1.0 / (x[0] - x[0]), &meas, 4).unwrap_err();
        assert!(matches!(err, HlsError::NonFinite(_)));
    }

    #[test]
    fn nonuniform_domain_quadrature() {
        // ∫ t dt / 50 over [0, 50] with uniform probability measure = 25.
        let dom = HyperRectangle::new(vec![0.0], vec![50.0]).unwrap();
        let meas = ProductMeasure::uniform(dom);
        assert_abs_diff_eq!(
            quadrature_integral(|x| x[0], &meas, 16).unwrap(),
            25.0,
            epsilon = 1e-10
        );
    }
}
