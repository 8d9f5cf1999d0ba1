//! Synthetic datasets with known generating parameters.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{check_len, invalid, Result};
use crate::latent::{check_gamma, convolve, sample_theta_prior, Ar1Params, Field, PhiField, ThetaField};
use crate::model::ObservationPanel;
use crate::spatial::{build_taper_sets, Location, SpatialFrame};
use crate::weights::{adaptive_weights, global_kernel_weights, kernel_psi, AdaptiveWeightState, SparseWeights};

/// How the true `W` is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthWeights {
    /// Kernel weights with bandwidth `alpha`.
    Global { alpha: f64 },
    /// Explicit `psi` rows (`K x m`, ranked by distance).
    Adaptive { psi: Vec<f64> },
    /// Two clusters of `K/2` sites, the second shifted east by `offset`
    /// (in units of the domain side; 0 interleaves them). Each site puts
    /// kernel weight (bandwidth `alpha`) only on taper members of its own
    /// cluster, so the two halves carry independent latent surfaces.
    Boundary { alpha: f64, offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub sites: usize,
    pub times: usize,
    pub m: usize,
    /// Intercept first; the other entries multiply i.i.d. N(0, 1) covariates.
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub tau2: f64,
    pub truth: TruthWeights,
    /// Sites are uniform on `[0, side]^2` (per cluster for the boundary case).
    pub side: f64,
    /// Expected counts are uniform on this range.
    pub e_range: (f64, f64),
    /// One expected count per site, repeated over time.
    pub e_time_constant: bool,
    /// When false, `theta` (and hence `phi`) is fixed at 0.
    pub latent: bool,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sites: 100,
            times: 10,
            m: 8,
            beta: alloc::vec![0.2, 0.5, -0.3],
            gamma: 0.7,
            tau2: 0.1,
            truth: TruthWeights::Global { alpha: 1.0 },
            side: 10.0,
            e_range: (50.0, 250.0),
            e_time_constant: true,
            latent: true,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 || self.times == 0 || self.m == 0 {
            return Err(invalid("sites, times and m must be positive"));
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("beta must be nonempty and finite"));
        }
        check_gamma(self.gamma)?;
        if !(self.tau2 > 0.0) || !self.tau2.is_finite() {
            return Err(invalid("tau2 must be positive"));
        }
        if !(self.side > 0.0) || !self.side.is_finite() {
            return Err(invalid("side must be positive"));
        }
        let (lo, hi) = self.e_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("e_range must satisfy 0 < lo <= hi"));
        }
        match &self.truth {
            TruthWeights::Global { alpha } | TruthWeights::Boundary { alpha, .. }
                if !(*alpha > 0.0) || !alpha.is_finite() =>
            {
                Err(invalid("alpha must be positive"))
            }
            TruthWeights::Boundary { offset, .. } if !offset.is_finite() => Err(invalid("offset must be finite")),
            _ => Ok(()),
        }
    }
}

/// Everything used to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub tau2: f64,
    pub alpha: Option<f64>,
    pub psi: AdaptiveWeightState,
    pub weights: SparseWeights,
    pub theta: ThetaField,
    pub phi: PhiField,
    /// Cluster of each site (all 0 unless the boundary scenario is used).
    pub clusters: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub panel: ObservationPanel,
    pub frame: SpatialFrame,
    pub truth: SimulationTruth,
}

/// Site identifiers used by the simulator: `S001`, `S002`, ...
pub fn site_label(k: usize, sites: usize) -> String {
    let digits = alloc::format!("{}", sites).len().max(3);
    alloc::format!("S{:0digits$}", k + 1)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Generates one dataset. The output is a pure function of `config`.
pub fn simulate_dataset(config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let mut rng = crate::mcmc::chain_rng(config.seed, 0);
    let (k_sites, n) = (config.sites, config.times);
    let side = config.side;

    let boundary = matches!(config.truth, TruthWeights::Boundary { .. });
    let clusters: Vec<u8> = (0..k_sites)
        .map(|k| u8::from(boundary && k >= k_sites / 2))
        .collect();
    let shift = match config.truth {
        TruthWeights::Boundary { offset, .. } => offset * side,
        _ => 0.0,
    };
    let locations: Vec<Location> = (0..k_sites)
        .map(|k| {
            let x = uniform(&mut rng, 0.0, side) + if clusters[k] == 1 { shift } else { 0.0 };
            let y = uniform(&mut rng, 0.0, side);
            Location::new(site_label(k, k_sites), x, y)
        })
        .collect();
    let frame = build_taper_sets(locations, config.m)?;
    let width = frame.m();

    let (alpha, psi) = match &config.truth {
        TruthWeights::Global { alpha } => (Some(*alpha), kernel_psi(&frame, *alpha)?),
        TruthWeights::Adaptive { psi } => {
            check_len("truth psi", k_sites * width, psi.len())?;
            (None, AdaptiveWeightState::from_rows(width, psi.clone())?)
        }
        TruthWeights::Boundary { alpha, .. } => (None, cluster_psi(&frame, *alpha, &clusters)?),
    };
    let weights = match config.truth {
        TruthWeights::Global { alpha } => global_kernel_weights(&frame, alpha)?,
        _ => adaptive_weights(&frame, &psi)?,
    };

    let theta = if config.latent {
        sample_theta_prior(&Ar1Params::new(config.gamma, config.tau2)?, k_sites, n, &mut rng)
    } else {
        Field::zeros(k_sites, n)
    };
    let phi = convolve(&weights, &theta)?;

    let p = config.beta.len();
    let cells = k_sites * n;
    let mut x = Vec::with_capacity(cells * p);
    for _ in 0..cells {
        x.push(1.0);
        for _ in 1..p {
            x.push(StandardNormal.sample(&mut rng));
        }
    }
    let (elo, ehi) = config.e_range;
    let mut e = Vec::with_capacity(cells);
    for _ in 0..k_sites {
        let site_e = uniform(&mut rng, elo, ehi);
        for _ in 0..n {
            e.push(if config.e_time_constant { site_e } else { uniform(&mut rng, elo, ehi) });
        }
    }
    let mut y = Vec::with_capacity(cells);
    for c in 0..cells {
        let xb: f64 = x[c * p..(c + 1) * p].iter().zip(&config.beta).map(|(a, b)| a * b).sum();
        let mu = e[c] * libm::exp(xb + phi.values()[c]);
        y.push(poisson(mu, &mut rng)?);
    }

    let names = core::iter::once(String::from("intercept"))
        .chain((1..p).map(|i| alloc::format!("x{i}")))
        .collect();
    let panel = ObservationPanel::new(k_sites, n, y, e, x, names)?;
    Ok(SimulatedDataset {
        panel,
        frame,
        truth: SimulationTruth {
            beta: config.beta.clone(),
            gamma: config.gamma,
            tau2: config.tau2,
            alpha,
            psi,
            weights,
            theta,
            phi,
            clusters,
        },
    })
}

fn poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<u64> {
    if mu == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mu).map_err(|_| invalid(alloc::format!("Poisson mean {mu} out of range")))?;
    Ok(d.sample(rng) as u64)
}

/// Kernel weights restricted to same-cluster taper members.
fn cluster_psi(frame: &SpatialFrame, alpha: f64, clusters: &[u8]) -> Result<AdaptiveWeightState> {
    let base = kernel_psi(frame, alpha)?;
    let width = frame.m();
    let mut psi = Vec::with_capacity(frame.len() * width);
    for k in 0..frame.len() {
        let start = psi.len();
        for (r, &j) in frame.taper_set(k).iter().enumerate() {
            let same = clusters[j] == clusters[k];
            psi.push(if same { base.row(k)[r] } else { 0.0 });
        }
        let total: f64 = psi[start..].iter().sum();
        psi[start..].iter_mut().for_each(|v| *v /= total);
    }
    AdaptiveWeightState::from_rows(width, psi)
}

/// Median spatial correlation over ordered pairs `(k, i)`, `i != k`, with
/// `i` in the taper set of `k`, under kernel weights with bandwidth `alpha`.
pub fn median_taper_correlation(frame: &SpatialFrame, alpha: f64) -> Result<f64> {
    let w = global_kernel_weights(frame, alpha)?;
    let mut corr = Vec::new();
    for k in 0..frame.len() {
        for &i in &frame.taper_set(k)[1..] {
            corr.push(crate::latent::spatial_corr(&w, k, i));
        }
    }
    if corr.is_empty() {
        return Err(invalid("no within-taper pairs"));
    }
    Ok(crate::stats::median(&corr))
}

/// Bandwidth whose [`median_taper_correlation`] equals `target`, by
/// bisection on `ln(alpha)` over `[1e-4, 1e4]`.
pub fn alpha_for_median_correlation(frame: &SpatialFrame, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target correlation must lie in (0, 1)"));
    }
    let (mut lo, mut hi) = (libm::log(1e-4), libm::log(1e4));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        // Correlation falls as alpha grows.
        if median_taper_correlation(frame, libm::exp(mid))? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(libm::exp(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SimulationConfig {
            sites: 20,
            times: 3,
            m: 4,
            ..SimulationConfig::default()
        };
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.panel.y(), b.panel.y());
        assert_eq!(a.truth.theta, b.truth.theta);
        assert_eq!(a.panel.cells(), 60);
        assert_eq!(a.panel.p(), 3);
        assert!(a.panel.e().iter().all(|&e| (50.0..=250.0).contains(&e)));
    }

    #[test]
    fn boundary_weights_stay_in_cluster() {
        let cfg = SimulationConfig {
            sites: 30,
            times: 2,
            m: 6,
            truth: TruthWeights::Boundary { alpha: 0.5, offset: 0.0 },
            ..SimulationConfig::default()
        };
        let d = simulate_dataset(&cfg).unwrap();
        for (k, j, w) in d.truth.weights.triplets() {
            if d.truth.clusters[k] != d.truth.clusters[j] {
                assert_eq!(w, 0.0);
            }
        }
        assert_eq!(d.truth.clusters.iter().filter(|&&c| c == 1).count(), 15);
    }

    #[test]
    fn single_site() {
        let cfg = SimulationConfig {
            sites: 1,
            times: 4,
            m: 8,
            ..SimulationConfig::default()
        };
        let d = simulate_dataset(&cfg).unwrap();
        assert_eq!(d.frame.taper_set(0), [0]);
        assert_eq!(d.truth.weights.get(0, 0), 1.0);
    }

    #[test]
    fn calibrated_alpha_hits_target() {
        let cfg = SimulationConfig {
            sites: 40,
            times: 2,
            m: 5,
            ..SimulationConfig::default()
        };
        let d = simulate_dataset(&cfg).unwrap();
        let a = alpha_for_median_correlation(&d.frame, 0.5).unwrap();
        assert!((median_taper_correlation(&d.frame, a).unwrap() - 0.5).abs() < 1e-3);
    }
}
