//! Posterior sampling: single-parameter Metropolis updates, a conjugate
//! draw for `tau2`, multi-chain orchestration and convergence diagnostics.

pub mod chain;
pub mod config;
pub mod geweke;
pub mod tuning;
pub mod updates;

pub use chain::{chain_rng, run_chain, run_chains, sweep, AcceptanceRates, ChainDraws, PosteriorSamples, Tuners};
pub use config::{ChainConfig, ProposalScales};
pub use geweke::{batch_means_variance, geweke};
pub use tuning::StepTuner;
