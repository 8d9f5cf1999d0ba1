//! Posterior behaviour on data simulated with known weights.

use convospat_core::latent::spatial_corr;
use convospat_core::simulate::{simulate_dataset, SimulationConfig, TruthWeights};
use convospat_core::stats::{median, quantile_sorted, sorted};
use convospat_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn short(seed: u64) -> ChainConfig {
    ChainConfig::short(2000, 2000, 2, 3, seed)
}

#[test]
fn independent_sites_push_alpha_to_its_upper_bound() {
    let (k, m) = (100, 8);
    let psi: Vec<f64> = (0..k).flat_map(|_| (0..m).map(|r| if r == 0 { 1.0 } else { 0.0 })).collect();
    let d = simulate_dataset(&SimulationConfig {
        tau2: 0.3,
        truth: TruthWeights::Adaptive { psi },
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let priors = Priors::default();
    let ctx = ModelContext::poisson(&d.panel, &d.frame, priors);
    let s = run_chains(&short(1), &ctx, Scheme::Global).unwrap();
    let alpha = sorted(&s.alpha());
    assert!(median(&alpha) > 0.5 * priors.alpha_hi, "median alpha {}", median(&alpha));
    let w = global_kernel_weights(&d.frame, quantile_sorted(&alpha, 0.05)).unwrap();
    let self_weights: Vec<f64> = (0..k).map(|r| w.get(r, r)).collect();
    assert!(median(&self_weights) > 0.99);
}

/// Two tight clusters of `m` sites far apart, each sharing one latent
/// surface.
#[test]
fn clustered_surface_gives_high_within_cluster_correlation() {
    let (m, n) = (5, 20);
    let mut locs = Vec::new();
    for (c, cx) in [0.0, 100.0].into_iter().enumerate() {
        for i in 0..m {
            let a = i as f64 * std::f64::consts::TAU / m as f64;
            locs.push(Location::new(format!("c{c}s{i}"), cx + 0.1 * a.cos(), 0.1 * a.sin()));
        }
    }
    let k = locs.len();
    let frame = build_taper_sets(locs, m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let theta = sample_theta_prior(&Ar1Params::new(0.7, 1.0).unwrap(), k, n, &mut rng);
    let uniform = AdaptiveWeightState::uniform(k, m);
    let phi = convolve(&adaptive_weights(&frame, &uniform).unwrap(), &theta).unwrap();
    let e = vec![100.0; k * n];
    let y = (0..k * n)
        .map(|c| Poisson::new(e[c] * (0.1 + phi.values()[c]).exp()).unwrap().sample(&mut rng) as u64)
        .collect();
    let panel = ObservationPanel::new(k, n, y, e, vec![1.0; k * n], vec!["intercept".into()]).unwrap();
    let ctx = ModelContext::poisson(&panel, &frame, Priors::default());
    let s = run_chains(&short(2), &ctx, Scheme::Global).unwrap();

    let alpha = s.alpha();
    let pairs: Vec<(usize, usize)> = frame
        .overlapping_pairs()
        .into_iter()
        .filter(|&(a, b)| a != b && a / m == b / m)
        .collect();
    assert_eq!(pairs.len(), 2 * m * (m - 1) / 2);
    let mut per_pair = vec![Vec::with_capacity(alpha.len()); pairs.len()];
    for &a in &alpha {
        let w = global_kernel_weights(&frame, a).unwrap();
        for (v, &(x, z)) in per_pair.iter_mut().zip(&pairs) {
            v.push(spatial_corr(&w, x, z));
        }
    }
    let medians: Vec<f64> = per_pair.iter().map(|v| median(v)).collect();
    assert!(median(&medians) > 0.5, "{medians:?}");
}

fn boundary_data(seed: u64, m: usize, truth: TruthWeights) -> simulate::SimulatedDataset {
    simulate_dataset(&SimulationConfig {
        sites: 50,
        times: 30,
        m,
        side: 50f64.sqrt(),
        e_range: (200.0, 1000.0),
        tau2: 1.0,
        truth,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn adaptive_weights_find_the_boundary() {
    let d = boundary_data(
        2,
        4,
        TruthWeights::Boundary {
            alpha: 0.5,
            offset: 0.0,
        },
    );
    let ctx = ModelContext::poisson(&d.panel, &d.frame, Priors::default());
    let s = run_chains(&short(2), &ctx, Scheme::Adaptive).unwrap();
    let psi = s.psi_mean().unwrap();
    let m = d.frame.m();
    let clusters = &d.truth.clusters;
    let (mut cross, mut same) = (Vec::new(), Vec::new());
    for k in 0..d.frame.len() {
        for (r, &j) in d.frame.taper_set(k).iter().enumerate().skip(1) {
            if clusters[j] == clusters[k] {
                same.push(psi[k * m + r]);
            } else {
                cross.push(psi[k * m + r]);
            }
        }
    }
    assert!(cross.len() > 20 && same.len() > 20);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(avg(&cross) < 0.1, "cross-boundary {}", avg(&cross));
    assert!(avg(&same) > 0.2, "same side {}", avg(&same));
}

#[test]
fn adaptive_weights_track_kernel_truth() {
    let d = boundary_data(1, 8, TruthWeights::Global { alpha: 2.4 });
    let ctx = ModelContext::poisson(&d.panel, &d.frame, Priors::default());
    let s = run_chains(&short(1), &ctx, Scheme::Adaptive).unwrap();
    let psi = s.psi_mean().unwrap();
    let rho = pearson(&ranks(&psi), &ranks(d.truth.psi.values()));
    assert!(rho > 0.5, "rank correlation {rho}");
}
