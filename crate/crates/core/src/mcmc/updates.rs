//! Single Metropolis / Gibbs kernels. Each one leaves the state's caches
//! consistent with its parameters.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::tuning::StepTuner;
use crate::latent::convolve;
use crate::model::{ar1_conditional, CellLikelihood, ModelContext};
use crate::state::{ModelState, WeightParams};
use crate::weights::{dirichlet_ln_pdf, global_kernel_weights, sample_dirichlet_ln};

/// Added to every concentration of the `psi` proposal so that small
/// components are never absorbed at zero.
pub const PSI_PROPOSAL_FLOOR: f64 = 0.01;

/// Smallest log-component a proposed `psi` may have. Proposals below it
/// would underflow to exactly zero and are rejected; this restricts the
/// target to the simplex interior, which loses no measurable mass.
const MIN_LN_PSI: f64 = -700.0;

#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || libm::log(rng.random::<f64>()) < log_ratio
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Folds `x` into `[lo, hi]` by reflection at the ends.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if !x.is_finite() || !(width > 0.0) {
        return f64::NAN;
    }
    // reduce to one period of the reflected sawtooth
    let period = 2.0 * width;
    x = (x - lo) % period;
    if x < 0.0 {
        x += period;
    }
    if x > width {
        x = period - x;
    }
    lo + x
}

/// Coordinate-wise random-walk Metropolis on `beta` with its N(0, v I) prior.
/// `tuners` holds one scale per coefficient.
pub fn update_beta<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuners: &mut [StepTuner],
) {
    let panel = ctx.panel;
    let p = panel.p();
    let cells = panel.cells();
    let mut new_ll = alloc::vec![0.0; cells];
    for i in 0..p {
        let step = tuners[i].scale * normal(rng);
        let old = state.beta[i];
        let new = old + step;
        let mut delta = 0.0;
        for c in 0..cells {
            let x = panel.covariates(c)[i];
            let ll = ctx.lik.cell_loglik(c, state.ln_rate(c) + step * x);
            new_ll[c] = ll;
            delta += ll - state.cell_ll[c];
        }
        let prior = -0.5 * (new * new - old * old) / ctx.priors.beta_var;
        let ok = delta.is_finite() && accept(delta + prior, rng);
        tuners[i].record(ok);
        if ok {
            state.beta[i] = new;
            for c in 0..cells {
                state.xb[c] += step * panel.covariates(c)[i];
            }
            state.cell_ll.copy_from_slice(&new_ll);
            state.resum_loglik();
        }
    }
}

/// Single-site random-walk Metropolis over every `theta_t(s_j)`, using only
/// the cells whose taper set contains `j`. `tuners` is indexed by the
/// site-major cell `j * N + t`.
pub fn update_theta<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuners: &mut [StepTuner],
) {
    let frame = ctx.frame;
    let sites = state.theta.sites();
    let times = state.theta.times();
    let mut new_ll: Vec<f64> = Vec::with_capacity(frame.m() * 4);
    for j in 0..sites {
        let affected = frame.containing(j);
        for t in 0..times {
            let tuner = &mut tuners[j * times + t];
            let current = state.theta.get(j, t);
            let proposal = current + tuner.scale * normal(rng);
            let delta = proposal - current;

            new_ll.clear();
            let mut diff = 0.0;
            for e in affected {
                let cell = e.row * times + t;
                let w = state.weights.at_rank(e.row, e.rank);
                let ll = ctx.lik.cell_loglik(cell, state.ln_rate(cell) + w * delta);
                diff += ll - state.cell_ll[cell];
                new_ll.push(ll);
            }
            let series = state.theta.series(j);
            diff += ar1_conditional(series, t, proposal, state.gamma, state.tau2)
                - ar1_conditional(series, t, current, state.gamma, state.tau2);

            let ok = accept(diff, rng);
            tuner.record(ok);
            if ok {
                state.theta.set(j, t, proposal);
                for (e, &ll) in affected.iter().zip(&new_ll) {
                    let cell = e.row * times + t;
                    let w = state.weights.at_rank(e.row, e.rank);
                    state.phi.values_mut()[cell] += w * delta;
                    state.cell_ll[cell] = ll;
                }
            }
        }
    }
    state.resum_loglik();
}

/// Sum of squared AR(1) innovations of `theta` under `gamma`.
fn innovation_ss(state: &ModelState, gamma: f64) -> f64 {
    let mut ss = 0.0;
    for j in 0..state.theta.sites() {
        let s = state.theta.series(j);
        ss += s[0] * s[0];
        for t in 1..s.len() {
            let d = s[t] - gamma * s[t - 1];
            ss += d * d;
        }
    }
    ss
}

/// Conjugate draw `tau2 | theta, gamma ~ IG(a + KN/2, b + SS/2)`.
pub fn update_tau2<L: ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
) {
    let n = state.theta.values().len() as f64;
    let shape = ctx.priors.tau2_a + 0.5 * n;
    let rate = ctx.priors.tau2_b + 0.5 * innovation_ss(state, state.gamma);
    let precision = Gamma::new(shape, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng);
    state.tau2 = 1.0 / precision;
}

/// Random-walk Metropolis on `gamma`, reflected into `[0, 1)`. Only the
/// AR(1) prior of `theta` depends on `gamma`.
pub fn update_gamma<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R, tuner: &mut StepTuner) {
    // The AR(1) log density is quadratic in gamma:
    // -(gamma^2 * s_prev - 2 gamma * s_cross) / (2 tau2) + const.
    let mut s_prev = 0.0;
    let mut s_cross = 0.0;
    for j in 0..state.theta.sites() {
        let s = state.theta.series(j);
        for t in 1..s.len() {
            s_prev += s[t - 1] * s[t - 1];
            s_cross += s[t] * s[t - 1];
        }
    }
    let log_target = |g: f64| -(g * g * s_prev - 2.0 * g * s_cross) / (2.0 * state.tau2);

    let proposal = reflect(state.gamma + tuner.scale * normal(rng), 0.0, 1.0);
    let ok = proposal < 1.0 && accept(log_target(proposal) - log_target(state.gamma), rng);
    tuner.record(ok);
    if ok {
        state.gamma = proposal;
    }
}

/// Random-walk Metropolis on `ln(alpha)` within the prior bounds (global
/// scheme only). The uniform prior on `alpha` contributes the Jacobian
/// `ln(alpha)` on the log scale.
pub fn update_alpha<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuner: &mut StepTuner,
) {
    let WeightParams::Global { alpha } = state.params else {
        return;
    };
    let lo = libm::log(ctx.priors.alpha_lo);
    let hi = libm::log(ctx.priors.alpha_hi);
    let u = libm::log(alpha);
    let u_new = reflect(u + tuner.scale * normal(rng), lo, hi);
    let alpha_new = libm::exp(u_new);
    if !(alpha_new >= ctx.priors.alpha_lo && alpha_new <= ctx.priors.alpha_hi) {
        tuner.record(false);
        return;
    }
    let weights = match global_kernel_weights(ctx.frame, alpha_new) {
        Ok(w) => w,
        Err(_) => {
            tuner.record(false);
            return;
        }
    };
    let phi = convolve(&weights, &state.theta).expect("frame and theta agree");
    let new_ll: Vec<f64> = (0..state.xb.len())
        .map(|c| ctx.lik.cell_loglik(c, state.xb[c] + phi.values()[c]))
        .collect();
    let new_total: f64 = new_ll.iter().sum();
    let ok = new_total.is_finite() && accept(new_total - state.loglik + (u_new - u), rng);
    tuner.record(ok);
    if ok {
        state.params = WeightParams::Global { alpha: alpha_new };
        state.weights = weights;
        state.phi = phi;
        state.cell_ll = new_ll;
        state.loglik = new_total;
    }
}

/// Generalised Gibbs move along `beta_0 + d`, `theta - d`.
///
/// Rows of `W` sum to one, so the shift leaves every log rate unchanged and
/// only the Gaussian priors of `beta_0` and `theta` depend on `d`; `d` is
/// drawn from that Gaussian exactly. Requires the intercept in column 0.
pub fn update_intercept_shift<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
) {
    let g = state.gamma;
    let tau2 = state.tau2;
    let sites = state.theta.sites();
    let times = state.theta.times();
    let mut lin = 0.0;
    for j in 0..sites {
        let s = state.theta.series(j);
        lin += s[0];
        for t in 1..times {
            lin += (1.0 - g) * (s[t] - g * s[t - 1]);
        }
    }
    let v = ctx.priors.beta_var;
    let prec = sites as f64 * (1.0 + (times - 1) as f64 * (1.0 - g) * (1.0 - g)) / tau2 + 1.0 / v;
    let mean = (lin / tau2 - state.beta[0] / v) / prec;
    let d = mean + normal(rng) / libm::sqrt(prec);
    if !d.is_finite() {
        return;
    }
    state.beta[0] += d;
    state.theta.values_mut().iter_mut().for_each(|x| *x -= d);
    for (c, xb) in state.xb.iter_mut().enumerate() {
        *xb += d * ctx.panel.covariates(c)[0];
    }
    state.phi = convolve(&state.weights, &state.theta).expect("weights and theta agree");
    for c in 0..state.cell_ll.len() {
        state.cell_ll[c] = ctx.lik.cell_loglik(c, state.xb[c] + state.phi.values()[c]);
    }
    state.resum_loglik();
}

/// Log density of the inverse-gamma prior on `tau2`, up to a constant.
fn ln_tau2_prior<L: ?Sized>(ctx: &ModelContext<'_, L>, tau2: f64) -> f64 {
    -(ctx.priors.tau2_a + 1.0) * libm::log(tau2) - ctx.priors.tau2_b / tau2
}

/// Shared tail of the rescaling moves: sets `theta -> c theta`,
/// `tau2 -> c^2 tau2` and the given weights, then accepts with log ratio
/// `extra + dloglik + dprior(tau2) + 2 ln c`. The `theta` prior ratio
/// cancels against the `c^(KN)` Jacobian of the map.
fn rescale_move<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    ln_c: f64,
    weights: Option<(crate::weights::SparseWeights, WeightParams)>,
    extra: f64,
) -> bool {
    let c = libm::exp(ln_c);
    let tau2_new = state.tau2 * c * c;
    if !(tau2_new > 0.0) || !tau2_new.is_finite() {
        return false;
    }
    let mut theta = state.theta.clone();
    theta.values_mut().iter_mut().for_each(|x| *x *= c);
    let w = weights.as_ref().map_or(&state.weights, |(w, _)| w);
    let phi = convolve(w, &theta).expect("weights and theta agree");
    let new_ll: Vec<f64> = (0..state.xb.len())
        .map(|cell| ctx.lik.cell_loglik(cell, state.xb[cell] + phi.values()[cell]))
        .collect();
    let new_total: f64 = new_ll.iter().sum();
    let log_ratio = extra + new_total - state.loglik + ln_tau2_prior(ctx, tau2_new)
        - ln_tau2_prior(ctx, state.tau2)
        + 2.0 * ln_c;
    let ok = new_total.is_finite() && accept(log_ratio, rng);
    if ok {
        state.theta = theta;
        state.tau2 = tau2_new;
        state.phi = phi;
        state.cell_ll = new_ll;
        state.loglik = new_total;
        if let Some((w, params)) = weights {
            state.weights = w;
            state.params = params;
        }
    }
    ok
}

/// Joint rescaling of `theta` and `tau2` by a log-normal factor, which moves
/// the overall amplitude of the latent field in one step.
pub fn update_amplitude<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuner: &mut StepTuner,
) {
    let ln_c = tuner.scale * normal(rng);
    let ok = rescale_move(state, ctx, rng, ln_c, None, 0.0);
    tuner.record(ok);
}

/// Mean over sites of `sum_j w_kj^2`, which scales the prior variance of `phi`.
fn mean_sq_norm(w: &crate::weights::SparseWeights) -> f64 {
    (0..w.dim()).map(|k| w.row_sq_norm(k)).sum::<f64>() / w.dim() as f64
}

/// Random walk on `ln(alpha)` paired with a rescaling of `theta` and `tau2`
/// that keeps the average prior variance of `phi` fixed (global scheme
/// only). Changing the bandwidth alone forces `theta` to absorb the new
/// smoothing, so this move crosses the ridge between `alpha` and `tau2`.
/// The rescaling factor is `c(u, u') = 1 / c(u', u)`, making the map an
/// involution whose Jacobian enters through [`rescale_move`].
pub fn update_alpha_rescaled<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuner: &mut StepTuner,
) {
    let WeightParams::Global { alpha } = state.params else {
        return;
    };
    let lo = libm::log(ctx.priors.alpha_lo);
    let hi = libm::log(ctx.priors.alpha_hi);
    let u = libm::log(alpha);
    let u_new = reflect(u + tuner.scale * normal(rng), lo, hi);
    let alpha_new = libm::exp(u_new);
    let weights = match global_kernel_weights(ctx.frame, alpha_new) {
        Ok(w) if alpha_new >= ctx.priors.alpha_lo && alpha_new <= ctx.priors.alpha_hi => w,
        _ => {
            tuner.record(false);
            return;
        }
    };
    let ln_c = 0.5 * (libm::log(mean_sq_norm(&state.weights)) - libm::log(mean_sq_norm(&weights)));
    let params = WeightParams::Global { alpha: alpha_new };
    let ok = rescale_move(state, ctx, rng, ln_c, Some((weights, params)), u_new - u);
    tuner.record(ok);
}

/// Per-site Metropolis-Hastings on `psi_k` (adaptive scheme only).
///
/// Proposes `psi_k* ~ Dirichlet(c psi_k + 0.01)` and corrects for the
/// asymmetric proposal; the flat Dirichlet prior cancels. `tuners[k].scale`
/// is the concentration `c` for site `k`.
pub fn update_psi<L: CellLikelihood + ?Sized, R: Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuners: &mut [StepTuner],
) {
    let width = state.weights.width();
    if width < 2 || !matches!(state.params, WeightParams::Adaptive { .. }) {
        return;
    }
    let times = state.theta.times();
    let mut conc = alloc::vec![0.0; width];
    let mut ln_new = alloc::vec![0.0; width];
    let mut ln_cur = alloc::vec![0.0; width];
    let mut psi_new = alloc::vec![0.0; width];
    let mut phi_row = alloc::vec![0.0; times];
    let mut ll_row = alloc::vec![0.0; times];

    for k in 0..state.theta.sites() {
        let c = tuners[k].scale;
        let cur = state.weights.row_values(k);
        for r in 0..width {
            conc[r] = c * cur[r] + PSI_PROPOSAL_FLOOR;
            ln_cur[r] = libm::log(cur[r]);
        }
        sample_dirichlet_ln(&conc, rng, &mut ln_new);
        if ln_new.iter().any(|&v| !(v > MIN_LN_PSI)) {
            tuners[k].record(false);
            continue;
        }
        let forward = dirichlet_ln_pdf(&ln_new, &conc);
        for r in 0..width {
            psi_new[r] = libm::exp(ln_new[r]);
            conc[r] = c * psi_new[r] + PSI_PROPOSAL_FLOOR;
        }
        let backward = dirichlet_ln_pdf(&ln_cur, &conc);

        let cols = ctx.frame.taper_set(k);
        phi_row.iter_mut().for_each(|v| *v = 0.0);
        for (&j, &w) in cols.iter().zip(&psi_new) {
            for (d, s) in phi_row.iter_mut().zip(state.theta.series(j)) {
                *d += w * s;
            }
        }
        let mut diff = 0.0;
        for t in 0..times {
            let cell = k * times + t;
            ll_row[t] = ctx.lik.cell_loglik(cell, state.xb[cell] + phi_row[t]);
            diff += ll_row[t] - state.cell_ll[cell];
        }
        let ok = diff.is_finite() && accept(diff + backward - forward, rng);
        tuners[k].record(ok);
        if ok {
            state.weights.set_row(k, &psi_new);
            if let WeightParams::Adaptive { psi } = &mut state.params {
                psi.set_row(k, &psi_new);
            }
            for t in 0..times {
                let cell = k * times + t;
                state.phi.values_mut()[cell] = phi_row[t];
                state.cell_ll[cell] = ll_row[t];
            }
        }
    }
    state.resum_loglik();
}
