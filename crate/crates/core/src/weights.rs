//! Sparse row-stochastic weight matrices.
//!
//! Both weight laws put mass only on the taper set of each row:
//!
//! * global: `w_kj ∝ exp(-alpha * ||s_k - s_j|| / 2)` over the taper set,
//!   normalised per row (the Gaussian prefactor cancels and is omitted);
//! * adaptive: `w_kj = psi_kr` when `s_j` is the r-th entry of the taper set
//!   of `s_k`, with `psi_k` on the simplex and a flat Dirichlet prior.
//!
//! Storage is a triplet list in row-major, taper order. Every taper entry is
//! stored, including entries whose weight is exactly zero, so the structure
//! (and the number of stored triplets, `K * min(m, K)`) never depends on the
//! parameter values.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{check_len, invalid, Result};
use crate::spatial::SpatialFrame;

/// Which weight law produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Global,
    Adaptive,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Global => "global",
            Scheme::Adaptive => "adaptive",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Scheme::Global),
            "adaptive" => Ok(Scheme::Adaptive),
            other => Err(invalid(alloc::format!(
                "unknown model {other:?} (expected global or adaptive)"
            ))),
        }
    }
}

impl core::fmt::Display for Scheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `K x K` weight matrix in triplet form, `min(m, K)` stored entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights {
    dim: usize,
    width: usize,
    scheme: Scheme,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseWeights {
    fn from_rows(frame: &SpatialFrame, scheme: Scheme, values: Vec<f64>) -> Self {
        let width = frame.m();
        let mut cols = Vec::with_capacity(frame.len() * width);
        for k in 0..frame.len() {
            cols.extend_from_slice(frame.taper_set(k));
        }
        Self {
            dim: frame.len(),
            width,
            scheme,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries per row.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of stored triplets, `K * min(m, K)`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and weights of row `k`, in taper order.
    pub fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let span = k * self.width..(k + 1) * self.width;
        (&self.cols[span.clone()], &self.values[span])
    }

    pub fn row_values(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    /// Weight stored at rank `rank` of row `k`.
    #[inline]
    pub fn at_rank(&self, k: usize, rank: usize) -> f64 {
        self.values[k * self.width + rank]
    }

    /// Entry `w_kj` (zero off the taper set).
    pub fn get(&self, k: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(k);
        cols.iter()
            .position(|&c| c == j)
            .map(|r| vals[r])
            .unwrap_or(0.0)
    }

    /// `(row, col, weight)` in row-major, taper order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cols
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(move |(idx, (&c, &w))| (idx / self.width, c, w))
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row_values(k).iter().sum()
    }

    /// `sum_j w_kj^2`.
    pub fn row_sq_norm(&self, k: usize) -> f64 {
        self.row_values(k).iter().map(|w| w * w).sum()
    }

    /// `sum_j w_kj w_ij`; only the shared taper entries contribute.
    pub fn row_dot(&self, k: usize, i: usize) -> f64 {
        let (ck, vk) = self.row(k);
        let (ci, vi) = self.row(i);
        let mut acc = 0.0;
        for (a, &col) in ck.iter().enumerate() {
            if let Some(b) = ci.iter().position(|&c| c == col) {
                acc += vk[a] * vi[b];
            }
        }
        acc
    }

    /// Dense row-major copy, for small problems and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = alloc::vec![0.0; self.dim * self.dim];
        for (k, j, w) in self.triplets() {
            dense[k * self.dim + j] += w;
        }
        dense
    }

    pub(crate) fn set_row(&mut self, k: usize, row: &[f64]) {
        self.values[k * self.width..(k + 1) * self.width].copy_from_slice(row);
    }
}

/// Default support of the uniform prior on `alpha`, in inverse distance units
/// (chosen for coordinates in kilometres).
pub const DEFAULT_ALPHA_BOUNDS: (f64, f64) = (1e-6, 1e2);

/// Bandwidth and the bounds of its uniform prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalWeightParams {
    pub alpha: f64,
    pub prior_lo: f64,
    pub prior_hi: f64,
}

impl GlobalWeightParams {
    pub fn new(alpha: f64, prior_lo: f64, prior_hi: f64) -> Result<Self> {
        if !(prior_lo > 0.0 && prior_lo < prior_hi && prior_hi.is_finite()) {
            return Err(invalid(alloc::format!(
                "alpha prior bounds must satisfy 0 < lo < hi, got [{prior_lo}, {prior_hi}]"
            )));
        }
        if !(alpha >= prior_lo && alpha <= prior_hi) {
            return Err(invalid(alloc::format!(
                "alpha = {alpha} outside its prior support [{prior_lo}, {prior_hi}]"
            )));
        }
        Ok(Self {
            alpha,
            prior_lo,
            prior_hi,
        })
    }
}

/// Per-site simplex weights `psi_k`, stored row-major (`K x width`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeightState {
    width: usize,
    psi: Vec<f64>,
}

impl AdaptiveWeightState {
    /// `psi_k = (1/m, ..., 1/m)` for every site.
    pub fn uniform(sites: usize, width: usize) -> Self {
        Self {
            width,
            psi: alloc::vec![1.0 / width as f64; sites * width],
        }
    }

    /// Builds from row-major values; each row must lie on the simplex.
    pub fn from_rows(width: usize, psi: Vec<f64>) -> Result<Self> {
        if width == 0 || !psi.len().is_multiple_of(width) {
            return Err(invalid("psi length is not a multiple of the taper width"));
        }
        let state = Self { width, psi };
        for k in 0..state.sites() {
            let row = state.row(k);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(invalid(alloc::format!("psi row {k} is not on the simplex")));
            }
        }
        Ok(state)
    }

    pub fn sites(&self) -> usize {
        self.psi.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.psi[k * self.width..(k + 1) * self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub(crate) fn set_row(&mut self, k: usize, row: &[f64]) {
        self.psi[k * self.width..(k + 1) * self.width].copy_from_slice(row);
    }
}

/// Normalised kernel weights of every taper set, i.e. the `psi` that makes
/// the adaptive law reproduce the global one.
pub fn kernel_psi(frame: &SpatialFrame, alpha: f64) -> Result<AdaptiveWeightState> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(alloc::format!("alpha must be positive and finite, got {alpha}")));
    }
    let width = frame.m();
    let mut psi = Vec::with_capacity(frame.len() * width);
    for k in 0..frame.len() {
        let dists = frame.taper_distances(k);
        // Shift by the smallest exponent (the self term, 0) so the row never
        // underflows completely.
        let shift = dists.iter().copied().fold(f64::INFINITY, f64::min) * alpha / 2.0;
        let start = psi.len();
        let mut total = 0.0;
        for &d in dists {
            let v = libm::exp(-(alpha * d / 2.0 - shift));
            total += v;
            psi.push(v);
        }
        for v in &mut psi[start..] {
            *v /= total;
        }
    }
    Ok(AdaptiveWeightState { width, psi })
}

/// Tapered Gaussian-kernel weights with bandwidth `alpha`.
pub fn global_kernel_weights(frame: &SpatialFrame, alpha: f64) -> Result<SparseWeights> {
    let psi = kernel_psi(frame, alpha)?;
    Ok(SparseWeights::from_rows(frame, Scheme::Global, psi.psi))
}

/// Random-weight law: `w_kj = psi_kr` for the r-th closest site `j`.
pub fn adaptive_weights(frame: &SpatialFrame, psi: &AdaptiveWeightState) -> Result<SparseWeights> {
    check_len("psi taper width", frame.m(), psi.width())?;
    check_len("psi sites", frame.len(), psi.sites())?;
    Ok(SparseWeights::from_rows(frame, Scheme::Adaptive, psi.psi.clone()))
}

/// Natural log of a Gamma(shape, 1) draw, stable for small shapes.
///
/// For `shape < 1` uses `G(a) = G(a + 1) * U^(1/a)` in log space; the direct
/// draw underflows to zero for the tiny shapes used by concentrated
/// Dirichlet proposals.
pub(crate) fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape checked positive");
        libm::log(g.sample(rng))
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape checked positive");
        // (0, 1]
        let u = 1.0 - rng.random::<f64>();
        libm::log(g.sample(rng)) + libm::log(u) / shape
    }
}

/// Dirichlet draw returned as log-components (normalised in log space).
pub(crate) fn sample_dirichlet_ln<R: Rng + ?Sized>(
    concentration: &[f64],
    rng: &mut R,
    out: &mut [f64],
) {
    for (o, &a) in out.iter_mut().zip(concentration) {
        *o = ln_gamma_draw(a, rng);
    }
    let lse = crate::stats::log_sum_exp(out);
    for o in out.iter_mut() {
        *o -= lse;
    }
}

/// One draw from `Dirichlet(concentration)`.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(invalid("Dirichlet concentration must be non-empty"));
    }
    if concentration.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(invalid("Dirichlet concentrations must be positive and finite"));
    }
    if concentration.len() == 1 {
        return Ok(alloc::vec![1.0]);
    }
    let mut ln = alloc::vec![0.0; concentration.len()];
    sample_dirichlet_ln(concentration, rng, &mut ln);
    let mut x: Vec<f64> = ln.iter().map(|&v| libm::exp(v)).collect();
    let total: f64 = x.iter().sum();
    for v in &mut x {
        *v /= total;
    }
    Ok(x)
}

/// Log density of `Dirichlet(concentration)` at the point with log
/// components `ln_x`.
pub fn dirichlet_ln_pdf(ln_x: &[f64], concentration: &[f64]) -> f64 {
    let total: f64 = concentration.iter().sum();
    let mut acc = libm::lgamma(total);
    for (&lx, &a) in ln_x.iter().zip(concentration) {
        acc += (a - 1.0) * lx - libm::lgamma(a);
    }
    acc
}
