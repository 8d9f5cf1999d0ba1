use crate::error::{invalid, Result};

/// Initial proposal scales. They are tuned during burn-in and frozen after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalScales {
    /// Gaussian random-walk sd for each regression coefficient.
    pub beta: f64,
    /// Gaussian random-walk sd for each `theta_t(s_j)`.
    pub theta: f64,
    /// Random-walk sd for `gamma` (reflected into `[0, 1)`).
    pub gamma: f64,
    /// Random-walk sd for `ln(alpha)`.
    pub log_alpha: f64,
    /// Concentration `c` of the Dirichlet(c psi_k + 0.01) proposal; larger
    /// means smaller moves.
    pub psi_concentration: f64,
    /// Log-normal sd of the joint `theta`/`tau2` rescaling factor.
    pub amplitude: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        Self {
            beta: 0.01,
            theta: 0.1,
            gamma: 0.05,
            log_alpha: 0.2,
            psi_concentration: 100.0,
            amplitude: 0.05,
        }
    }
}

/// Chain lengths, seeding and adaptation settings.
///
/// The defaults follow the long protocol (three chains, 100,000 burn-in,
/// 100,000 further iterations thinned by 10); desk runs shorten them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub n_burnin: usize,
    /// Post-burn-in iterations; every `thin`-th is retained.
    pub n_keep: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub scales: ProposalScales,
    /// Burn-in iterations between proposal-scale adaptations.
    pub adapt_interval: usize,
    /// Target acceptance for the scalar random-walk updates.
    pub target_accept: f64,
    /// Target acceptance for the per-site `psi` block updates.
    pub target_accept_psi: f64,
    pub store_psi: bool,
    pub store_loglik: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_burnin: 100_000,
            n_keep: 100_000,
            thin: 10,
            n_chains: 3,
            seed: 1,
            scales: ProposalScales::default(),
            adapt_interval: 50,
            target_accept: 0.44,
            target_accept_psi: 0.25,
            store_psi: true,
            store_loglik: true,
        }
    }
}

impl ChainConfig {
    /// A short run for tests and desk checks.
    pub fn short(n_burnin: usize, n_keep: usize, thin: usize, n_chains: usize, seed: u64) -> Self {
        Self {
            n_burnin,
            n_keep,
            thin,
            n_chains,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.n_chains == 0 || self.n_keep == 0 || self.adapt_interval == 0 {
            return Err(invalid("n_keep, thin, n_chains and adapt_interval must be positive"));
        }
        if self.n_keep < self.thin {
            return Err(invalid("n_keep must be at least thin"));
        }
        for t in [self.target_accept, self.target_accept_psi] {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid("target acceptance rates must lie in (0, 1)"));
            }
        }
        let s = &self.scales;
        for v in [s.beta, s.theta, s.gamma, s.log_alpha, s.psi_concentration, s.amplitude] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid("proposal scales must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        self.n_keep / self.thin
    }
}
