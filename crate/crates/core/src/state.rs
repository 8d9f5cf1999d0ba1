//! Current values of every sampled quantity plus the caches derived from them.

use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::latent::{check_gamma, convolve, Field, ThetaField};
use crate::model::{linear_predictor, CellLikelihood, ModelContext};
use crate::spatial::SpatialFrame;
use crate::weights::{adaptive_weights, global_kernel_weights, kernel_psi, AdaptiveWeightState, Scheme, SparseWeights};

/// The parameters that determine `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightParams {
    Global { alpha: f64 },
    Adaptive { psi: AdaptiveWeightState },
}

impl WeightParams {
    pub fn scheme(&self) -> Scheme {
        match self {
            WeightParams::Global { .. } => Scheme::Global,
            WeightParams::Adaptive { .. } => Scheme::Adaptive,
        }
    }

    pub fn build_weights(&self, frame: &SpatialFrame) -> Result<SparseWeights> {
        match self {
            WeightParams::Global { alpha } => global_kernel_weights(frame, *alpha),
            WeightParams::Adaptive { psi } => adaptive_weights(frame, psi),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            WeightParams::Global { alpha } => Some(*alpha),
            WeightParams::Adaptive { .. } => None,
        }
    }

    pub fn psi(&self) -> Option<&AdaptiveWeightState> {
        match self {
            WeightParams::Global { .. } => None,
            WeightParams::Adaptive { psi } => Some(psi),
        }
    }
}

/// Starting bandwidth `10 / d`, where `d` is the median distance from a site
/// to its nearest distinct neighbour, clamped to the prior bounds. Chains
/// started from small bandwidths can settle in a state with a very large
/// `tau2` and rough `theta`; starting from nearly independent sites avoids
/// it. Falls back to the geometric mean of the bounds when every taper set
/// is a single point.
pub fn initial_alpha(frame: &SpatialFrame, priors: &crate::model::Priors) -> f64 {
    let nearest: Vec<f64> = (0..frame.len())
        .filter_map(|k| frame.taper_distances(k).iter().copied().find(|&d| d > 0.0))
        .collect();
    let fallback = libm::sqrt(priors.alpha_lo * priors.alpha_hi);
    if nearest.is_empty() {
        return fallback;
    }
    let d = crate::stats::median(&nearest);
    let a = 10.0 / d;
    if a.is_finite() {
        a.clamp(priors.alpha_lo, priors.alpha_hi)
    } else {
        fallback
    }
}

/// Parameters plus caches of `W`, `phi`, `x^T beta` and the per-cell
/// log-likelihood. The samplers keep the caches in step with the parameters
/// after every accepted move.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub(crate) beta: Vec<f64>,
    pub(crate) theta: ThetaField,
    pub(crate) gamma: f64,
    pub(crate) tau2: f64,
    pub(crate) params: WeightParams,
    pub(crate) weights: SparseWeights,
    pub(crate) phi: Field,
    pub(crate) xb: Vec<f64>,
    pub(crate) cell_ll: Vec<f64>,
    pub(crate) loglik: f64,
}

impl ModelState {
    pub fn new<L: CellLikelihood + ?Sized>(
        ctx: &ModelContext<'_, L>,
        beta: Vec<f64>,
        theta: ThetaField,
        gamma: f64,
        tau2: f64,
        params: WeightParams,
    ) -> Result<Self> {
        let panel = ctx.panel;
        check_len("beta", panel.p(), beta.len())?;
        check_len("theta sites", panel.sites(), theta.sites())?;
        check_len("theta times", panel.times(), theta.times())?;
        check_len("frame sites", panel.sites(), ctx.frame.len())?;
        check_gamma(gamma)?;
        if !(tau2 > 0.0) || !tau2.is_finite() {
            return Err(invalid(alloc::format!("tau2 must be positive, got {tau2}")));
        }
        let weights = params.build_weights(ctx.frame)?;
        let mut state = Self {
            phi: Field::zeros(theta.sites(), theta.times()),
            xb: Vec::new(),
            cell_ll: Vec::new(),
            loglik: 0.0,
            beta,
            theta,
            gamma,
            tau2,
            params,
            weights,
        };
        state.refresh(ctx)?;
        Ok(state)
    }

    /// Deterministic starting point: intercept from the crude rate
    /// `ln((sum y + 0.5) / sum e)`, other coefficients 0, `theta = 0`,
    /// `gamma = 0.5`, `tau2 = 0.1`, and weights close to the identity:
    /// `alpha` from [`initial_alpha`] and, for the adaptive scheme, the
    /// kernel weights at that `alpha` mixed 99:1 with uniform weights.
    pub fn initial<L: CellLikelihood + ?Sized>(ctx: &ModelContext<'_, L>, scheme: Scheme) -> Result<Self> {
        let panel = ctx.panel;
        let total_y: f64 = panel.y().iter().map(|&v| v as f64).sum();
        let total_e: f64 = panel.e().iter().sum();
        let mut beta = alloc::vec![0.0; panel.p()];
        beta[0] = libm::log((total_y + 0.5) / total_e);
        let alpha = initial_alpha(ctx.frame, &ctx.priors);
        let params = match scheme {
            Scheme::Global => WeightParams::Global { alpha },
            Scheme::Adaptive => {
                let width = ctx.frame.m();
                let mut psi = kernel_psi(ctx.frame, alpha)?.values().to_vec();
                for v in &mut psi {
                    *v = 0.99 * *v + 0.01 / width as f64;
                }
                WeightParams::Adaptive {
                    psi: AdaptiveWeightState::from_rows(width, psi)?,
                }
            }
        };
        let state = Self::new(
            ctx,
            beta,
            Field::zeros(panel.sites(), panel.times()),
            0.5,
            0.1,
            params,
        )?;
        if !state.loglik.is_finite() {
            return Err(Error::Initialisation(alloc::format!(
                "log-likelihood {} at the initial state (intercept {})",
                state.loglik, state.beta[0]
            )));
        }
        Ok(state)
    }

    /// Recomputes every cache from the parameters.
    pub fn refresh<L: CellLikelihood + ?Sized>(&mut self, ctx: &ModelContext<'_, L>) -> Result<()> {
        self.weights = self.params.build_weights(ctx.frame)?;
        self.phi = convolve(&self.weights, &self.theta)?;
        self.xb = linear_predictor(ctx.panel, &self.beta)?;
        self.cell_ll = (0..self.xb.len())
            .map(|c| ctx.lik.cell_loglik(c, self.xb[c] + self.phi.values()[c]))
            .collect();
        self.resum_loglik();
        Ok(())
    }

    pub(crate) fn resum_loglik(&mut self) {
        self.loglik = self.cell_ll.iter().sum();
    }

    /// Largest absolute gap between the caches and a from-scratch recompute
    /// (phi, linear predictor, total log-likelihood).
    pub fn cache_error<L: CellLikelihood + ?Sized>(&self, ctx: &ModelContext<'_, L>) -> f64 {
        let mut fresh = self.clone();
        if fresh.refresh(ctx).is_err() {
            return f64::INFINITY;
        }
        let field_gap = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let mut gap = field_gap(self.phi.values(), fresh.phi.values());
        gap = gap.max(field_gap(&self.xb, &fresh.xb));
        gap = gap.max((self.loglik - fresh.loglik).abs());
        if self.weights != fresh.weights {
            gap = gap.max(field_gap(
                &self.weights.to_dense(),
                &fresh.weights.to_dense(),
            ));
        }
        gap
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn theta(&self) -> &ThetaField {
        &self.theta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn scheme(&self) -> Scheme {
        self.params.scheme()
    }

    pub fn weights(&self) -> &SparseWeights {
        &self.weights
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    /// Cached log rate of one cell.
    #[inline]
    pub fn ln_rate(&self, cell: usize) -> f64 {
        self.xb[cell] + self.phi.values()[cell]
    }

    pub fn cell_loglik(&self) -> &[f64] {
        &self.cell_ll
    }

    /// Cached total log-likelihood.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }
}
