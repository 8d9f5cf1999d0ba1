use convospat_core::assessment::{lmpl, waic, ParameterSummary};
use convospat_core::geweke;
use convospat_core::simulate::{simulate_dataset, SimulationConfig, TruthWeights};
use convospat_core::standardize::{expected_counts, scale_expected, spr, ListSizeTable};
use convospat_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// WAIC written out with plain loops and direct exponentials.
fn naive_waic(ll: &[Vec<f64>]) -> (f64, f64, f64) {
    let s = ll.len() as f64;
    let cells = ll[0].len();
    let (mut lppd, mut pw) = (0.0, 0.0);
    for c in 0..cells {
        let mut lik = 0.0;
        let mut mean = 0.0;
        for row in ll {
            lik += row[c].exp();
            mean += row[c];
        }
        lppd += (lik / s).ln();
        mean /= s;
        let mut var = 0.0;
        for row in ll {
            var += (row[c] - mean).powi(2);
        }
        pw += var / (s - 1.0);
    }
    (lppd, pw, -2.0 * (lppd - pw))
}

fn naive_lmpl(ll: &[Vec<f64>]) -> f64 {
    let s = ll.len() as f64;
    (0..ll[0].len())
        .map(|c| {
            let inv: f64 = ll.iter().map(|row| 1.0 / row[c].exp()).sum();
            (s / inv).ln()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn waic_and_lmpl_match_naive_formulas(values in prop::collection::vec(-12.0f64..0.0, 30)) {
        let rows: Vec<Vec<f64>> = values.chunks(6).map(<[f64]>::to_vec).collect();
        let (lppd, pw, w) = naive_waic(&rows);
        let got = waic(&values, 6).unwrap();
        prop_assert!((got.lppd - lppd).abs() < 1e-10);
        prop_assert!((got.p_w - pw).abs() < 1e-10);
        prop_assert!((got.waic - w).abs() < 1e-10);
        prop_assert!((lmpl(&values, 6).unwrap().lmpl - naive_lmpl(&rows)).abs() < 1e-10);
    }

    #[test]
    fn relative_rates_are_exp_of_quantiles(draws in prop::collection::vec(-2.0f64..2.0, 1..200), sd in 0.1f64..3.0) {
        let s = ParameterSummary::from_draws("b", &draws, Some(sd)).unwrap();
        let (m, lo, hi) = s.rr.unwrap();
        prop_assert!((lo - (sd * s.lo95).exp()).abs() < 1e-12 * lo);
        prop_assert!((m - (sd * s.median).exp()).abs() < 1e-12 * m);
        prop_assert!((hi - (sd * s.hi95).exp()).abs() < 1e-12 * hi);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn scaling_matches_totals_and_is_idempotent(
        e in prop::collection::vec(0.01f64..500.0, 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<u64> = e.iter().map(|&v| rand_distr::Poisson::new(v).unwrap().sample(&mut rng) as u64 + 1).collect();
        let scaled = scale_expected(&e, &y).unwrap();
        let total_y: f64 = y.iter().map(|&v| v as f64).sum();
        let total_e: f64 = scaled.iter().sum();
        prop_assert!((total_e / total_y - 1.0).abs() < 1e-9);
        prop_assert_eq!(scale_expected(&scaled, &y).unwrap(), scaled.clone());
        let global: f64 = total_y / total_e;
        prop_assert!((global - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spr_of_matching_counts_is_one(y in prop::collection::vec(1u64..1000, 1..30)) {
        let e: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        prop_assert!(spr(&y, &e).unwrap().iter().all(|&v| v == 1.0));
    }
}

#[test]
fn hand_computed_cases() {
    let w = waic(&[-1.0, -3.0], 1).unwrap();
    let lppd = ((-1.0f64).exp() + (-3.0f64).exp()).ln() - 2f64.ln();
    assert!((w.lppd - lppd).abs() < 1e-12);
    assert!((w.lppd - -1.5662191695169727).abs() < 1e-12);
    assert!((w.p_w - 2.0).abs() < 1e-12);
    assert!((w.waic - 7.132438339033945).abs() < 1e-12);

    let l = lmpl(&[-1.0, -3.0], 1).unwrap();
    assert!((l.lmpl.exp() - 2.0 / (1f64.exp() + 3f64.exp())).abs() < 1e-12);
    assert!((l.lmpl - -2.4337808304830273).abs() < 1e-12);

    let same = [-0.5, -2.0, -1.0, -0.5, -2.0, -1.0, -0.5, -2.0, -1.0];
    let w = waic(&same, 3).unwrap();
    assert_eq!(w.p_w, 0.0);
    assert!((w.waic - 7.0).abs() < 1e-12);
    assert!((lmpl(&same, 3).unwrap().lmpl + 3.5).abs() < 1e-12);
    assert!(matches!(waic(&[-1.0], 1), Err(Error::TooFewDraws { .. })));
}

#[test]
fn relative_rate_examples() {
    let zero = ParameterSummary::from_draws("b", &[0.0; 10], Some(1.0)).unwrap();
    assert_eq!(zero.rr, Some((1.0, 1.0, 1.0)));
    let small = ParameterSummary::from_draws("b", &[0.02; 10], Some(1.0)).unwrap();
    assert!((small.rr.unwrap().0 - 1.0202).abs() < 1e-4);
}

#[test]
fn geweke_null_and_drift() {
    let mut inside = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        if geweke(&x).unwrap().unwrap().abs() <= 1.96 {
            inside += 1;
        }
    }
    assert!(inside >= 90, "{inside}/100");

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let drift: Vec<f64> = (0..10_000)
        .map(|i| 0.001 * i as f64 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    assert!(geweke(&drift).unwrap().unwrap().abs() > 1.96);
    assert_eq!(geweke(&[2.5; 1000]).unwrap(), None);
}

#[test]
fn expected_count_examples() {
    let t = ListSizeTable::new(
        vec!["a".into(), "b".into(), "z".into()],
        vec!["g1".into(), "g2".into()],
        vec![100.0, 0.0, 100.0, 50.0, 0.0, 0.0],
        vec![0.1, 0.2],
    )
    .unwrap();
    let e = expected_counts(&t);
    assert!((e.values[0] - 10.0).abs() < 1e-12);
    assert!((e.values[1] - 20.0).abs() < 1e-12);
    assert_eq!(e.excluded, [2]);
    assert_eq!(scale_expected(&[1.0; 4], &[2, 2, 2, 2]).unwrap(), [2.0; 4]);
    assert_eq!(scale_expected(&[1.0, 3.0], &[1, 3]).unwrap(), [1.0, 3.0]);
    assert_eq!(spr(&[12, 0], &[10.0, 4.0]).unwrap(), [1.2, 0.0]);
}

#[test]
fn null_generator_has_unit_spr() {
    let d = simulate_dataset(&SimulationConfig {
        sites: 100,
        times: 10,
        beta: vec![0.0],
        latent: false,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let s = spr(d.panel.y(), d.panel.e()).unwrap();
    assert_eq!(s.len(), 1000);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

/// Average over neighbouring pairs of the correlation between the two
/// sites' log SPR series.
#[test]
fn boundary_scenario_separates_clusters() {
    let d = simulate_dataset(&SimulationConfig {
        sites: 100,
        times: 30,
        beta: vec![0.0],
        tau2: 0.3,
        e_range: (500.0, 1000.0),
        truth: TruthWeights::Boundary {
            alpha: 2.0,
            offset: 0.0,
        },
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let n = d.panel.times();
    let s = spr(d.panel.y(), d.panel.e()).unwrap();
    let series = |k: usize| -> Vec<f64> { s[k * n..(k + 1) * n].iter().map(|v| v.ln()).collect() };
    let corr = |a: &[f64], b: &[f64]| {
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for t in 0..n {
            ab += (a[t] - ma) * (b[t] - mb);
            aa += (a[t] - ma).powi(2);
            bb += (b[t] - mb).powi(2);
        }
        ab / (aa * bb).sqrt()
    };
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for (k, i) in d.frame.overlapping_pairs() {
        if k == i {
            continue;
        }
        let r = corr(&series(k), &series(i));
        if d.truth.clusters[k] == d.truth.clusters[i] {
            within.push(r);
        } else {
            cross.push(r);
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(cross.len() > 30);
    assert!(avg(&cross).abs() < 0.1, "cross {}", avg(&cross));
    assert!(avg(&within) > 0.2, "within {}", avg(&within));
}

#[test]
fn simulator_is_deterministic() {
    let cfg = SimulationConfig {
        sites: 20,
        seed: 9,
        ..Default::default()
    };
    let a = simulate_dataset(&cfg).unwrap();
    let b = simulate_dataset(&cfg).unwrap();
    assert_eq!(a.panel, b.panel);
    assert_eq!(a.frame.locations(), b.frame.locations());
    assert_eq!(a.truth.theta, b.truth.theta);
}

/// Pearson dispersion statistic against chi-square quantiles (Wilson-Hilferty)
/// at the 1% level.
#[test]
fn near_degenerate_latent_field_gives_poisson_dispersion() {
    let d = simulate_dataset(&SimulationConfig {
        beta: vec![0.0],
        gamma: 0.0,
        tau2: 1e-10,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let x2: f64 = d
        .panel
        .y()
        .iter()
        .zip(d.panel.e())
        .map(|(&y, &e)| (y as f64 - e).powi(2) / e)
        .sum();
    let df = d.panel.cells() as f64;
    let q = |z: f64| df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    assert!(q(-2.5758) < x2 && x2 < q(2.5758), "{x2} on {df} df");
}
