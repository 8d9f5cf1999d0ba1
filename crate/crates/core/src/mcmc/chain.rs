//! Chain orchestration: burn-in with adaptation, thinning, and the
//! containers for retained draws.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ChainConfig;
use super::tuning::{adaptation_gain, StepTuner};
use super::updates::{
    update_alpha, update_alpha_rescaled, update_amplitude, update_beta, update_gamma,
    update_intercept_shift, update_psi, update_tau2, update_theta,
};
use crate::error::{Error, Result};
use crate::model::{CellLikelihood, ModelContext};
use crate::state::ModelState;
use crate::weights::Scheme;

/// RNG for chain `chain` under master seed `seed`: ChaCha8 seeded with
/// `seed_from_u64(seed)` on stream `chain`. Streams are independent, so the
/// output never depends on which thread runs which chain.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Proposal tuners for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuners {
    pub beta: Vec<StepTuner>,
    pub theta: Vec<StepTuner>,
    pub gamma: StepTuner,
    pub log_alpha: StepTuner,
    pub alpha_rescaled: StepTuner,
    pub amplitude: StepTuner,
    pub psi: Vec<StepTuner>,
}

impl Tuners {
    pub fn new(config: &ChainConfig, p: usize, sites: usize, times: usize) -> Self {
        let s = &config.scales;
        Self {
            beta: alloc::vec![StepTuner::new(s.beta); p],
            theta: alloc::vec![StepTuner::new(s.theta); sites * times],
            gamma: StepTuner::new(s.gamma),
            log_alpha: StepTuner::new(s.log_alpha),
            alpha_rescaled: StepTuner::new(s.log_alpha),
            amplitude: StepTuner::new(s.amplitude),
            psi: alloc::vec![StepTuner::new(s.psi_concentration); sites],
        }
    }

    fn adapt(&mut self, config: &ChainConfig, batch: usize) {
        let gain = adaptation_gain(batch);
        let target = config.target_accept;
        for t in self.beta.iter_mut().chain(self.theta.iter_mut()) {
            t.adapt(target, gain, false);
        }
        self.gamma.adapt(target, gain, false);
        self.log_alpha.adapt(target, gain, false);
        self.alpha_rescaled.adapt(target, gain, false);
        self.amplitude.adapt(target, gain, false);
        for t in &mut self.psi {
            t.adapt(config.target_accept_psi, gain, true);
        }
    }

    fn reset_totals(&mut self) {
        for t in self
            .beta
            .iter_mut()
            .chain(self.theta.iter_mut())
            .chain(self.psi.iter_mut())
        {
            t.reset_totals();
        }
        self.gamma.reset_totals();
        self.log_alpha.reset_totals();
        self.alpha_rescaled.reset_totals();
        self.amplitude.reset_totals();
    }

    /// Every current scale, flattened (for freeze checks).
    pub fn scales(&self) -> Vec<f64> {
        self.beta
            .iter()
            .chain(&self.theta)
            .chain(core::iter::once(&self.gamma))
            .chain(core::iter::once(&self.log_alpha))
            .chain(core::iter::once(&self.alpha_rescaled))
            .chain(core::iter::once(&self.amplitude))
            .chain(&self.psi)
            .map(|t| t.scale)
            .collect()
    }
}

/// One full sweep: beta, the intercept/theta shift, theta, the weight
/// parameters, the rescaling moves, gamma, tau2.
pub fn sweep<L: CellLikelihood + ?Sized, R: rand::Rng + ?Sized>(
    state: &mut ModelState,
    ctx: &ModelContext<'_, L>,
    rng: &mut R,
    tuners: &mut Tuners,
) {
    update_beta(state, ctx, rng, &mut tuners.beta);
    update_intercept_shift(state, ctx, rng);
    update_theta(state, ctx, rng, &mut tuners.theta);
    match state.scheme() {
        Scheme::Global => {
            update_alpha(state, ctx, rng, &mut tuners.log_alpha);
            update_alpha_rescaled(state, ctx, rng, &mut tuners.alpha_rescaled);
        }
        Scheme::Adaptive => update_psi(state, ctx, rng, &mut tuners.psi),
    }
    update_amplitude(state, ctx, rng, &mut tuners.amplitude);
    update_gamma(state, rng, &mut tuners.gamma);
    update_tau2(state, ctx, rng);
}

/// Post-burn-in acceptance rates of one chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceRates {
    pub beta: Vec<f64>,
    /// Per site-major cell `j * N + t`.
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub alpha_rescaled: f64,
    pub amplitude: f64,
    pub psi: Vec<f64>,
}

/// Retained draws of one chain. Matrices are draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    /// Post-burn-in iteration number (1-based) of each draw.
    pub iterations: Vec<usize>,
    /// `draws x p`.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau2: Vec<f64>,
    /// Empty for the adaptive scheme.
    pub alpha: Vec<f64>,
    /// `draws x (K * m)` when stored; empty for the global scheme.
    pub psi: Vec<f64>,
    /// `draws x cells` pointwise log-likelihood when stored.
    pub loglik: Vec<f64>,
    /// Posterior mean of `phi` over the retained draws (site-major).
    pub phi_mean: Vec<f64>,
    pub acceptance: AcceptanceRates,
    /// Proposal scales when burn-in ended and when sampling ended; equal
    /// because adaptation stops with burn-in.
    pub scales_after_burnin: Vec<f64>,
    pub scales_at_end: Vec<f64>,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Runs chain number `chain` (which selects its RNG stream).
pub fn run_chain<L: CellLikelihood + ?Sized>(
    config: &ChainConfig,
    ctx: &ModelContext<'_, L>,
    scheme: Scheme,
    chain: usize,
) -> Result<ChainDraws> {
    config.validate()?;
    ctx.priors.validate()?;
    let panel = ctx.panel;
    let (p, sites, times) = (panel.p(), panel.sites(), panel.times());
    let cells = panel.cells();
    let width = ctx.frame.m();

    let mut state = ModelState::initial(ctx, scheme)?;
    let mut rng = chain_rng(config.seed, chain);
    let mut tuners = Tuners::new(config, p, sites, times);

    let mut batch = 0;
    for it in 1..=config.n_burnin {
        sweep(&mut state, ctx, &mut rng, &mut tuners);
        if it % config.adapt_interval == 0 {
            batch += 1;
            tuners.adapt(config, batch);
        }
        debug_check(&state, ctx, it)?;
    }
    let scales_after_burnin = tuners.scales();
    tuners.reset_totals();

    let draws = config.draws_per_chain();
    let mut out = ChainDraws {
        chain,
        iterations: Vec::with_capacity(draws),
        beta: Vec::with_capacity(draws * p),
        gamma: Vec::with_capacity(draws),
        tau2: Vec::with_capacity(draws),
        alpha: Vec::new(),
        psi: Vec::new(),
        loglik: Vec::new(),
        phi_mean: alloc::vec![0.0; cells],
        acceptance: AcceptanceRates {
            beta: Vec::new(),
            theta: Vec::new(),
            gamma: 0.0,
            alpha: 0.0,
            alpha_rescaled: 0.0,
            amplitude: 0.0,
            psi: Vec::new(),
        },
        scales_after_burnin,
        scales_at_end: Vec::new(),
    };
    if config.store_loglik {
        out.loglik.reserve(draws * cells);
    }
    if scheme == Scheme::Adaptive && config.store_psi {
        out.psi.reserve(draws * sites * width);
    }

    for it in 1..=config.n_keep {
        sweep(&mut state, ctx, &mut rng, &mut tuners);
        debug_check(&state, ctx, config.n_burnin + it)?;
        if it % config.thin != 0 {
            continue;
        }
        out.iterations.push(it);
        out.beta.extend_from_slice(&state.beta);
        out.gamma.push(state.gamma);
        out.tau2.push(state.tau2);
        if let Some(a) = state.params.alpha() {
            out.alpha.push(a);
        }
        if config.store_psi {
            if let Some(psi) = state.params.psi() {
                out.psi.extend_from_slice(psi.values());
            }
        }
        if config.store_loglik {
            out.loglik.extend_from_slice(&state.cell_ll);
        }
        for (m, v) in out.phi_mean.iter_mut().zip(state.phi.values()) {
            *m += v;
        }
        if out.iterations.len() > draws {
            break;
        }
    }
    let n = out.iterations.len().max(1) as f64;
    out.phi_mean.iter_mut().for_each(|v| *v /= n);
    out.acceptance = AcceptanceRates {
        beta: tuners.beta.iter().map(StepTuner::acceptance_rate).collect(),
        theta: tuners.theta.iter().map(StepTuner::acceptance_rate).collect(),
        gamma: tuners.gamma.acceptance_rate(),
        alpha: tuners.log_alpha.acceptance_rate(),
        alpha_rescaled: tuners.alpha_rescaled.acceptance_rate(),
        amplitude: tuners.amplitude.acceptance_rate(),
        psi: tuners.psi.iter().map(StepTuner::acceptance_rate).collect(),
    };
    out.scales_at_end = tuners.scales();
    Ok(out)
}

/// Full-recompute cache check every 1000 iterations in debug builds.
#[inline]
fn debug_check<L: CellLikelihood + ?Sized>(
    state: &ModelState,
    ctx: &ModelContext<'_, L>,
    iteration: usize,
) -> Result<()> {
    if cfg!(debug_assertions) && iteration.is_multiple_of(1000) {
        let gap = state.cache_error(ctx);
        if !(gap < 1e-8) {
            return Err(Error::Degenerate(alloc::format!(
                "cache drift {gap:e} at iteration {iteration}"
            )));
        }
    }
    Ok(())
}

/// Pooled output of all chains of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub scheme: Scheme,
    pub sites: usize,
    pub times: usize,
    /// Effective taper size.
    pub m: usize,
    pub covariate_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorSamples {
    pub fn from_chains<L: ?Sized>(
        ctx: &ModelContext<'_, L>,
        scheme: Scheme,
        chains: Vec<ChainDraws>,
    ) -> Self {
        Self {
            scheme,
            sites: ctx.panel.sites(),
            times: ctx.panel.times(),
            m: ctx.frame.m(),
            covariate_names: ctx.panel.covariate_names().to_vec(),
            chains,
        }
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn cells(&self) -> usize {
        self.sites * self.times
    }

    /// Total retained draws over all chains.
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    /// Draws of coefficient `i`, chains concatenated.
    pub fn beta(&self, i: usize) -> Vec<f64> {
        let p = self.p();
        self.chains
            .iter()
            .flat_map(|c| c.beta.iter().skip(i).step_by(p).copied())
            .collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.gamma.iter().copied()).collect()
    }

    pub fn tau2(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.tau2.iter().copied()).collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.alpha.iter().copied()).collect()
    }

    /// Pointwise log-likelihood, `draws x cells`, chains concatenated.
    pub fn loglik_matrix(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.loglik.iter().copied()).collect()
    }

    /// Posterior mean of each `psi` entry (`K x m`), if `psi` was stored.
    pub fn psi_mean(&self) -> Option<Vec<f64>> {
        let width = self.sites * self.m;
        let mut acc = alloc::vec![0.0; width];
        let mut n = 0usize;
        for c in &self.chains {
            for draw in c.psi.chunks_exact(width) {
                for (a, v) in acc.iter_mut().zip(draw) {
                    *a += v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        acc.iter_mut().for_each(|v| *v /= n as f64);
        Some(acc)
    }

    /// Posterior mean of `phi` averaged over chains.
    pub fn phi_mean(&self) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.cells()];
        let total: usize = self.n_draws().max(1);
        for c in &self.chains {
            let w = c.len() as f64 / total as f64;
            for (a, v) in acc.iter_mut().zip(&c.phi_mean) {
                *a += w * v;
            }
        }
        acc
    }
}

/// Runs `config.n_chains` chains one after another. The result is identical
/// to running them concurrently since each chain owns its RNG stream.
pub fn run_chains<L: CellLikelihood + ?Sized>(
    config: &ChainConfig,
    ctx: &ModelContext<'_, L>,
    scheme: Scheme,
) -> Result<PosteriorSamples> {
    let chains = (0..config.n_chains)
        .map(|c| run_chain(config, ctx, scheme, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSamples::from_chains(ctx, scheme, chains))
}
