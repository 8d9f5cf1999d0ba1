//! Poisson data model: linear predictor, log-likelihood, the joint log
//! posterior and the sparse full conditional of a single `theta_t(s_j)`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Result};
use crate::latent::{Field, PhiField};
use crate::spatial::SpatialFrame;
use crate::state::{ModelState, WeightParams};
use crate::weights::DEFAULT_ALPHA_BOUNDS;

/// Counts, scaled expected counts and covariates over `K` sites and `N`
/// times. Cells are site-major: `cell = k * N + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    sites: usize,
    times: usize,
    p: usize,
    y: Vec<u64>,
    e: Vec<f64>,
    x: Vec<f64>,
    covariate_names: Vec<String>,
    covariate_sds: Vec<f64>,
    ln_e: Vec<f64>,
    ln_y_fact: Vec<f64>,
}

impl ObservationPanel {
    /// `x` is `cells x p` row-major and must start with an all-ones column.
    /// `covariate_names` has length `p`; all standard deviations start at 1.
    pub fn new(
        sites: usize,
        times: usize,
        y: Vec<u64>,
        e: Vec<f64>,
        x: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if sites == 0 || times == 0 {
            return Err(invalid("panel needs at least one site and one time"));
        }
        let cells = sites * times;
        let p = covariate_names.len();
        if p == 0 {
            return Err(invalid("panel needs at least the intercept column"));
        }
        check_len("y", cells, y.len())?;
        check_len("e", cells, e.len())?;
        check_len("covariates", cells * p, x.len())?;
        for (c, &ev) in e.iter().enumerate() {
            if !(ev > 0.0) || !ev.is_finite() {
                return Err(invalid(alloc::format!(
                    "expected count must be positive and finite at site {} time {}, got {ev}",
                    c / times,
                    c % times
                )));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariates must be finite"));
        }
        if (0..cells).any(|c| x[c * p] != 1.0) {
            return Err(invalid("first covariate column must be identically 1"));
        }
        let ln_e = e.iter().map(|&v| libm::log(v)).collect();
        let ln_y_fact = y.iter().map(|&v| libm::lgamma(v as f64 + 1.0)).collect();
        Ok(Self {
            sites,
            times,
            p,
            y,
            e,
            x,
            covariate_names,
            covariate_sds: alloc::vec![1.0; p],
            ln_e,
            ln_y_fact,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn cells(&self) -> usize {
        self.sites * self.times
    }

    /// Number of covariates including the intercept.
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn cell(&self, k: usize, t: usize) -> usize {
        k * self.times + t
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// Covariate row of one cell.
    #[inline]
    pub fn covariates(&self, cell: usize) -> &[f64] {
        &self.x[cell * self.p..(cell + 1) * self.p]
    }

    pub fn covariate_matrix(&self) -> &[f64] {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Divisors applied by [`standardize_covariates`](Self::standardize_covariates)
    /// (1 for the intercept, indicators and untouched columns).
    pub fn covariate_sds(&self) -> &[f64] {
        &self.covariate_sds
    }

    /// Divides each continuous covariate by its sample standard deviation.
    ///
    /// The intercept, 0/1 indicator columns and constant columns are left
    /// alone. After this, each coefficient is the effect of a one-SD increase.
    pub fn standardize_covariates(&mut self) {
        let cells = self.cells();
        for i in 1..self.p {
            let col: Vec<f64> = (0..cells).map(|c| self.x[c * self.p + i]).collect();
            if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                continue;
            }
            let sd = libm::sqrt(crate::stats::sample_variance(&col));
            if !(sd > 0.0) || !sd.is_finite() {
                continue;
            }
            for c in 0..cells {
                self.x[c * self.p + i] /= sd;
            }
            self.covariate_sds[i] *= sd;
        }
    }

    /// Poisson log pmf of cell `cell` at log rate `ln_rate`, including `-ln(y!)`.
    #[inline]
    pub fn poisson_cell(&self, cell: usize, ln_rate: f64) -> f64 {
        let y = self.y[cell] as f64;
        y * (self.ln_e[cell] + ln_rate) - self.e[cell] * libm::exp(ln_rate) - self.ln_y_fact[cell]
    }
}

/// Per-cell log-likelihood as a function of the log rate.
///
/// The samplers are generic over this so test harnesses can swap in a
/// likelihood with a closed-form posterior.
pub trait CellLikelihood {
    fn cell_loglik(&self, cell: usize, ln_rate: f64) -> f64;
}

impl CellLikelihood for ObservationPanel {
    #[inline]
    fn cell_loglik(&self, cell: usize, ln_rate: f64) -> f64 {
        self.poisson_cell(cell, ln_rate)
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    /// Diagonal variance of the zero-mean Gaussian prior on `beta`.
    pub beta_var: f64,
    pub tau2_a: f64,
    pub tau2_b: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            beta_var: 1000.0,
            tau2_a: crate::latent::TAU2_PRIOR_A,
            tau2_b: crate::latent::TAU2_PRIOR_B,
            alpha_lo: DEFAULT_ALPHA_BOUNDS.0,
            alpha_hi: DEFAULT_ALPHA_BOUNDS.1,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        crate::weights::GlobalWeightParams::new(self.alpha_lo, self.alpha_lo, self.alpha_hi)?;
        if !(self.beta_var > 0.0 && self.tau2_a > 0.0 && self.tau2_b > 0.0) {
            return Err(invalid("prior variance and inverse-gamma parameters must be positive"));
        }
        Ok(())
    }
}

/// Everything a sampler reads but never mutates.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a, L: ?Sized = ObservationPanel> {
    pub panel: &'a ObservationPanel,
    pub frame: &'a SpatialFrame,
    pub lik: &'a L,
    pub priors: Priors,
}

impl<'a> ModelContext<'a, ObservationPanel> {
    /// The Poisson model on `panel`.
    pub fn poisson(panel: &'a ObservationPanel, frame: &'a SpatialFrame, priors: Priors) -> Self {
        Self {
            panel,
            frame,
            lik: panel,
            priors,
        }
    }
}

/// `x_t(s_k)^T beta` for every cell.
pub fn linear_predictor(panel: &ObservationPanel, beta: &[f64]) -> Result<Vec<f64>> {
    check_len("beta", panel.p(), beta.len())?;
    Ok((0..panel.cells())
        .map(|c| panel.covariates(c).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect())
}

/// `ln R_t(s_k) = x_t(s_k)^T beta + phi_t(s_k)`.
pub fn log_rate(panel: &ObservationPanel, beta: &[f64], phi: &PhiField) -> Result<Field> {
    check_len("phi sites", panel.sites(), phi.sites())?;
    check_len("phi times", panel.times(), phi.times())?;
    let mut xb = linear_predictor(panel, beta)?;
    for (v, p) in xb.iter_mut().zip(phi.values()) {
        *v += p;
    }
    Field::from_values(panel.sites(), panel.times(), xb)
}

/// Per-cell Poisson log-likelihood.
pub fn pointwise_loglik(panel: &ObservationPanel, log_rate: &Field) -> Result<Field> {
    check_len("log-rate sites", panel.sites(), log_rate.sites())?;
    check_len("log-rate times", panel.times(), log_rate.times())?;
    let values = log_rate
        .values()
        .iter()
        .enumerate()
        .map(|(c, &lr)| panel.poisson_cell(c, lr))
        .collect();
    Field::from_values(panel.sites(), panel.times(), values)
}

/// Total Poisson log-likelihood, including the `ln(y!)` terms.
pub fn poisson_loglik(panel: &ObservationPanel, log_rate: &Field) -> Result<f64> {
    Ok(pointwise_loglik(panel, log_rate)?.values().iter().sum())
}

/// AR(1) prior log density of `theta` (normalising constant included).
pub fn ar1_log_prior(theta: &Field, gamma: f64, tau2: f64) -> f64 {
    let mut ss = 0.0;
    for j in 0..theta.sites() {
        let s = theta.series(j);
        ss += s[0] * s[0];
        for t in 1..s.len() {
            let d = s[t] - gamma * s[t - 1];
            ss += d * d;
        }
    }
    let n = theta.values().len() as f64;
    -0.5 * ss / tau2 - 0.5 * n * libm::log(2.0 * core::f64::consts::PI * tau2)
}

/// Log joint posterior (up to a constant) recomputed from scratch; ignores
/// every cache in `state` except the parameters themselves.
pub fn log_joint_posterior<L: CellLikelihood + ?Sized>(
    ctx: &ModelContext<'_, L>,
    state: &ModelState,
) -> f64 {
    let pr = &ctx.priors;
    let panel = ctx.panel;
    let weights = state.params().build_weights(ctx.frame);
    let weights = match weights {
        Ok(w) => w,
        Err(_) => return f64::NEG_INFINITY,
    };
    let phi = match crate::latent::convolve(&weights, state.theta()) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    let xb = match linear_predictor(panel, state.beta()) {
        Ok(v) => v,
        Err(_) => return f64::NEG_INFINITY,
    };
    let loglik: f64 = (0..panel.cells())
        .map(|c| ctx.lik.cell_loglik(c, xb[c] + phi.values()[c]))
        .sum();

    let gamma = state.gamma();
    let tau2 = state.tau2();
    if !(0.0..1.0).contains(&gamma) || !(tau2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let beta_prior: f64 = state.beta().iter().map(|b| -0.5 * b * b / pr.beta_var).sum();
    let tau2_prior = -(pr.tau2_a + 1.0) * libm::log(tau2) - pr.tau2_b / tau2;
    let weight_prior = match state.params() {
        WeightParams::Global { alpha } => {
            if *alpha >= pr.alpha_lo && *alpha <= pr.alpha_hi {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        // flat Dirichlet: constant on the simplex
        WeightParams::Adaptive { .. } => 0.0,
    };
    loglik + beta_prior + ar1_log_prior(state.theta(), gamma, tau2) + tau2_prior + weight_prior
}

/// Log full conditional of `theta_t(s_j)` at `theta_star`, up to a constant.
///
/// Only the cells `(k, t)` with `j` in the taper set of `k` enter the
/// likelihood part, plus the AR(1) terms linking `t - 1`, `t` and `t + 1`.
pub fn theta_conditional_logdensity<L: CellLikelihood + ?Sized>(
    ctx: &ModelContext<'_, L>,
    state: &ModelState,
    j: usize,
    t: usize,
    theta_star: f64,
) -> f64 {
    let times = state.theta().times();
    let delta = theta_star - state.theta().get(j, t);
    let weights = state.weights();
    let mut acc = 0.0;
    for entry in ctx.frame.containing(j) {
        let cell = entry.row * times + t;
        let w = weights.at_rank(entry.row, entry.rank);
        acc += ctx.lik.cell_loglik(cell, state.ln_rate(cell) + w * delta);
    }
    acc + ar1_conditional(state.theta().series(j), t, theta_star, state.gamma(), state.tau2())
}

/// AR(1) terms of the full conditional of entry `t` of one series.
#[inline]
pub(crate) fn ar1_conditional(series: &[f64], t: usize, value: f64, gamma: f64, tau2: f64) -> f64 {
    let back = if t == 0 { value } else { value - gamma * series[t - 1] };
    let mut ss = back * back;
    if t + 1 < series.len() {
        let fwd = series[t + 1] - gamma * value;
        ss += fwd * fwd;
    }
    -0.5 * ss / tau2
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| alloc::format!("x{i}")).collect()
    }

    #[test]
    fn cell_examples() {
        let panel = ObservationPanel::new(1, 2, vec![0, 2], vec![1.0, 1.0], vec![1.0, 1.0], names(1))
            .unwrap();
        assert!((panel.poisson_cell(0, 0.0) - (-1.0)).abs() < 1e-15);
        assert!((panel.poisson_cell(1, 0.0) - (-1.0 - libm::log(2.0))).abs() < 1e-14);
    }

    #[test]
    fn log_rate_examples() {
        let panel = ObservationPanel::new(1, 1, vec![3], vec![2.0], vec![1.0, 2.0], names(2)).unwrap();
        let phi = Field::from_values(1, 1, vec![-0.2]).unwrap();
        let lr = log_rate(&panel, &[0.1, 0.3], &phi).unwrap();
        assert!((lr.get(0, 0) - 0.5).abs() < 1e-15);
        let zero = log_rate(&panel, &[0.0, 0.0], &Field::zeros(1, 1)).unwrap();
        assert_eq!(zero.get(0, 0), 0.0);
    }

    #[test]
    fn validation() {
        assert!(ObservationPanel::new(1, 1, vec![1], vec![0.0], vec![1.0], names(1)).is_err());
        assert!(ObservationPanel::new(1, 1, vec![1], vec![1.0], vec![2.0], names(1)).is_err());
        assert!(ObservationPanel::new(1, 2, vec![1], vec![1.0, 1.0], vec![1.0, 1.0], names(1)).is_err());
        assert!(ObservationPanel::new(1, 1, vec![1], vec![f64::NAN], vec![1.0], names(1)).is_err());
    }

    #[test]
    fn standardize_skips_intercept_and_indicators() {
        let x = vec![1.0, 0.0, 2.0, 1.0, 1.0, 4.0, 1.0, 0.0, 6.0];
        let mut panel = ObservationPanel::new(3, 1, vec![1, 2, 3], vec![1.0; 3], x, names(3)).unwrap();
        panel.standardize_covariates();
        assert_eq!(panel.covariate_sds(), &[1.0, 1.0, 2.0]);
        assert_eq!(panel.covariates(1), &[1.0, 1.0, 2.0]);
        assert_eq!(panel.covariate_names()[2], "x2".to_string());
    }

    #[test]
    fn increasing_rate_with_zero_count_lowers_loglik() {
        let panel = ObservationPanel::new(1, 1, vec![0], vec![3.0], vec![1.0], names(1)).unwrap();
        let mut prev = f64::INFINITY;
        for i in -20..20 {
            let v = panel.poisson_cell(0, i as f64 * 0.1);
            assert!(v < prev);
            prev = v;
        }
    }
}
