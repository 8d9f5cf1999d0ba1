//! AR(1) latent field, its tridiagonal precision, the convolution
//! `phi = W theta`, and the closed-form moments of `phi`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, invalid, Error, Result};
use crate::weights::SparseWeights;

/// Inverse-gamma shape of the `tau2` prior.
pub const TAU2_PRIOR_A: f64 = 1.0;
/// Inverse-gamma scale of the `tau2` prior.
pub const TAU2_PRIOR_B: f64 = 0.01;

/// Temporal autocorrelation, innovation variance and the `tau2` prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Params {
    pub gamma: f64,
    pub tau2: f64,
    pub prior_a: f64,
    pub prior_b: f64,
}

impl Ar1Params {
    pub fn new(gamma: f64, tau2: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(tau2 > 0.0) || !tau2.is_finite() {
            return Err(invalid(alloc::format!("tau2 must be positive, got {tau2}")));
        }
        Ok(Self {
            gamma,
            tau2,
            prior_a: TAU2_PRIOR_A,
            prior_b: TAU2_PRIOR_B,
        })
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(invalid(alloc::format!("gamma must lie in [0, 1), got {gamma}")))
    }
}

/// A `K x N` site-by-time array, site-major (`index = k * N + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    sites: usize,
    times: usize,
    values: Vec<f64>,
}

/// `theta_t(s_j)` at entry `(j, t)`.
pub type ThetaField = Field;
/// `phi_t(s_k)` at entry `(k, t)`.
pub type PhiField = Field;

impl Field {
    pub fn zeros(sites: usize, times: usize) -> Self {
        Self {
            sites,
            times,
            values: alloc::vec![0.0; sites * times],
        }
    }

    pub fn from_values(sites: usize, times: usize, values: Vec<f64>) -> Result<Self> {
        check_len("field values", sites * times, values.len())?;
        Ok(Self {
            sites,
            times,
            values,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn times(&self) -> usize {
        self.times
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.values[k * self.times + t]
    }

    #[inline]
    pub fn set(&mut self, k: usize, t: usize, v: f64) {
        self.values[k * self.times + t] = v;
    }

    /// The time series of site `k`.
    pub fn series(&self, k: usize) -> &[f64] {
        &self.values[k * self.times..(k + 1) * self.times]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    /// `L L^T` factorisation with lower-bidiagonal `L`.
    pub fn cholesky(&self) -> Result<TridiagonalCholesky> {
        let n = self.n();
        let mut diag = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut pivot = self.diag[i];
            if i > 0 {
                let l = self.off[i - 1] / diag[i - 1];
                sub.push(l);
                pivot -= l * l;
            }
            if !(pivot > 0.0) {
                return Err(Error::Degenerate(alloc::format!(
                    "tridiagonal matrix is not positive definite (pivot {i} = {pivot})"
                )));
            }
            diag.push(libm::sqrt(pivot));
        }
        Ok(TridiagonalCholesky { diag, sub })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl TridiagonalCholesky {
    /// Solves `L L^T x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            if i > 0 {
                x[i] -= self.sub[i - 1] * x[i - 1];
            }
            x[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                x[i] -= self.sub[i] * x[i + 1];
            }
            x[i] /= self.diag[i];
        }
    }

    /// Dense inverse by `N` solves against the unit vectors.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.diag.len();
        let mut out = alloc::vec![0.0; n * n];
        let mut col = alloc::vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[i * n + j] = col[i];
            }
        }
        out
    }
}

/// Precision of one site's series under the AR(1) prior (per unit `tau2`):
/// diagonal `1 + gamma^2` except the last entry `1`, off-diagonal `-gamma`.
pub fn precision_matrix(gamma: f64, n: usize) -> Result<Tridiagonal> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(invalid("series length N must be at least 1"));
    }
    let mut diag = alloc::vec![1.0 + gamma * gamma; n];
    diag[n - 1] = 1.0;
    Ok(Tridiagonal {
        diag,
        off: alloc::vec![-gamma; n - 1],
    })
}

/// Draws `theta` from the AR(1) prior, independently for each site.
pub fn sample_theta_prior<R: Rng + ?Sized>(
    params: &Ar1Params,
    sites: usize,
    times: usize,
    rng: &mut R,
) -> ThetaField {
    let sd = libm::sqrt(params.tau2);
    let mut field = Field::zeros(sites, times);
    for j in 0..sites {
        let mut prev = 0.0;
        for t in 0..times {
            let z: f64 = StandardNormal.sample(rng);
            let v = params.gamma * prev + sd * z;
            field.set(j, t, v);
            prev = v;
        }
    }
    field
}

/// `phi_t(s_k) = sum_j w_kj theta_t(s_j)`, touching only stored triplets.
pub fn convolve(weights: &SparseWeights, theta: &ThetaField) -> Result<PhiField> {
    check_len("theta sites", weights.dim(), theta.sites())?;
    let times = theta.times();
    let mut phi = Field::zeros(theta.sites(), times);
    for (k, j, w) in weights.triplets() {
        let src = theta.series(j);
        let dst = &mut phi.values[k * times..(k + 1) * times];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += w * s;
        }
    }
    Ok(phi)
}

/// Closed-form second moments of `phi` under the prior.
#[derive(Debug, Clone)]
pub struct PhiMoments<'w> {
    weights: &'w SparseWeights,
    tau2: f64,
    times: usize,
    q_inv: Vec<f64>,
    row_sq: Vec<f64>,
}

/// Moments of `phi` for weights `W` and AR(1) parameters over `N` times.
pub fn phi_moments<'w>(
    weights: &'w SparseWeights,
    params: &Ar1Params,
    times: usize,
) -> Result<PhiMoments<'w>> {
    let q = precision_matrix(params.gamma, times)?;
    let q_inv = q.cholesky()?.inverse();
    let row_sq = (0..weights.dim()).map(|k| weights.row_sq_norm(k)).collect();
    Ok(PhiMoments {
        weights,
        tau2: params.tau2,
        times,
        q_inv,
        row_sq,
    })
}

impl PhiMoments<'_> {
    /// `[Q^-1]_{tr}`.
    pub fn q_inv(&self, t: usize, r: usize) -> f64 {
        self.q_inv[t * self.times + r]
    }

    /// `Var(phi_t(s_k)) = tau2 [Q^-1]_tt sum_j w_kj^2`.
    pub fn variance(&self, k: usize, t: usize) -> f64 {
        self.tau2 * self.q_inv(t, t) * self.row_sq[k]
    }

    /// Correlation of `phi_t(s_k)` and `phi_r(s_k)`; the same for every site.
    pub fn temporal_corr(&self, t: usize, r: usize) -> f64 {
        self.q_inv(t, r) / libm::sqrt(self.q_inv(t, t) * self.q_inv(r, r))
    }

    /// Correlation of `phi_t(s_k)` and `phi_t(s_i)`; the same for every time.
    pub fn spatial_corr(&self, k: usize, i: usize) -> f64 {
        self.weights.row_dot(k, i) / libm::sqrt(self.row_sq[k] * self.row_sq[i])
    }
}

/// Spatial correlation from the weights alone.
pub fn spatial_corr(weights: &SparseWeights, k: usize, i: usize) -> f64 {
    weights.row_dot(k, i) / libm::sqrt(weights.row_sq_norm(k) * weights.row_sq_norm(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{build_taper_sets, Location};
    use crate::weights::{adaptive_weights, global_kernel_weights, AdaptiveWeightState};
    use alloc::format;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn precision_examples() {
        let q = precision_matrix(0.0, 4).unwrap().to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(q[i * 4 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let q = precision_matrix(0.5, 3).unwrap().to_dense();
        assert_eq!(q, alloc::vec![1.25, -0.5, 0.0, -0.5, 1.25, -0.5, 0.0, -0.5, 1.0]);
        assert_eq!(precision_matrix(0.7, 1).unwrap().to_dense(), alloc::vec![1.0]);
    }

    #[test]
    fn precision_rejects_bad_gamma() {
        assert!(precision_matrix(1.0, 3).is_err());
        assert!(precision_matrix(-0.1, 3).is_err());
        assert!(precision_matrix(0.5, 0).is_err());
    }

    #[test]
    fn inverse_matches_recursion_covariance() {
        // cov(theta_t, theta_r) = gamma^|t-r| * sum_{i < min(t,r)} gamma^(2i), 1-based
        let gamma: f64 = 0.8;
        let n = 5;
        let inv = precision_matrix(gamma, n).unwrap().cholesky().unwrap().inverse();
        for t in 1..=n {
            for r in 1..=n {
                let lag = t.abs_diff(r) as i32;
                let s: f64 = (0..t.min(r)).map(|i| gamma.powi(2 * i as i32)).sum();
                let expected = gamma.powi(lag) * s;
                assert!((inv[(t - 1) * n + (r - 1)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_and_constant_convolution() {
        let locs = (0..5)
            .map(|i| Location::new(format!("s{i}"), i as f64 * 0.7, (i * i) as f64 * 0.1))
            .collect();
        let frame = build_taper_sets(locs, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = sample_theta_prior(&Ar1Params::new(0.4, 1.0).unwrap(), 5, 4, &mut rng);

        let mut e1 = alloc::vec![0.0; 15];
        for k in 0..5 {
            e1[k * 3] = 1.0;
        }
        let ident = adaptive_weights(&frame, &AdaptiveWeightState::from_rows(3, e1).unwrap()).unwrap();
        assert_eq!(convolve(&ident, &theta).unwrap(), theta);

        let w = global_kernel_weights(&frame, 0.9).unwrap();
        let c = Field::from_values(5, 4, alloc::vec![2.5; 20]).unwrap();
        for v in convolve(&w, &c).unwrap().values() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_dimension_mismatch() {
        let locs = (0..3).map(|i| Location::new(format!("s{i}"), i as f64, 0.0)).collect();
        let frame = build_taper_sets(locs, 2).unwrap();
        let w = global_kernel_weights(&frame, 1.0).unwrap();
        assert!(convolve(&w, &Field::zeros(4, 2)).is_err());
    }

    #[test]
    fn self_and_disjoint_spatial_corr() {
        let locs = [0.0, 1.0, 2.0, 30.0, 31.0, 32.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| Location::new(format!("s{i}"), x, 0.0))
            .collect();
        let frame = build_taper_sets(locs, 3).unwrap();
        let w = global_kernel_weights(&frame, 0.5).unwrap();
        let mom = phi_moments(&w, &Ar1Params::new(0.3, 2.0).unwrap(), 3).unwrap();
        for k in 0..6 {
            assert!((mom.spatial_corr(k, k) - 1.0).abs() < 1e-12);
        }
        assert!(!frame.overlaps(0, 4));
        assert_eq!(mom.spatial_corr(0, 4), 0.0);
    }
}
