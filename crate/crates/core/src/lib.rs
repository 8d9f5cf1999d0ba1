//! Tapered spatio-temporal process-convolution model for counts observed at
//! fixed point locations.
//!
//! The log rate at site `k` and time `t` is a covariate term plus
//! `phi_t(s_k) = sum_j w_kj theta_t(s_j)`, where each `theta(s_j)` follows an
//! independent AR(1) process and `W` is a sparse row-stochastic weight matrix
//! restricted to each site's `m` nearest neighbours. Two weight laws are
//! provided: a single-bandwidth kernel ([`Scheme::Global`]) and per-site
//! Dirichlet weights estimated from the data ([`Scheme::Adaptive`]).
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the CLI and
//! thread-parallel chains live in the `convospat` crate.

#![no_std]
// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assessment;
pub mod error;
pub mod latent;
pub mod mcmc;
pub mod model;
pub mod simulate;
pub mod spatial;
pub mod standardize;
pub mod state;
pub mod stats;
pub mod weights;

pub use assessment::{fit_statistics, lmpl, summarize, waic, FitStatistics, ParameterSummary};
pub use error::{Error, Result};
pub use latent::{convolve, phi_moments, precision_matrix, sample_theta_prior, Ar1Params, Field};
pub use mcmc::{geweke, run_chain, run_chains, ChainConfig, ChainDraws, PosteriorSamples};
pub use model::{ModelContext, ObservationPanel, Priors};
pub use spatial::{build_taper_sets, euclidean_distance, Location, SpatialFrame};
pub use state::{ModelState, WeightParams};
pub use weights::{
    adaptive_weights, global_kernel_weights, sample_dirichlet, AdaptiveWeightState, Scheme,
    SparseWeights,
};
