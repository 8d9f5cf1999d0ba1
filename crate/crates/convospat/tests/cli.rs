use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use convospat::commands::{run, SUMMARY_HEADER, TIMING_FILE};
use convospat::io::{load_panel, read_key_values, read_locations, write_locations, write_observations};
use convospat::samples::{read_fit, write_fit};
use convospat::{CliError, Command, Overrides, RunConfig};
use convospat_core::{run_chains, ChainConfig, ModelContext, Priors, Scheme};
use tempfile::TempDir;

fn cfg(command: Command, out: &Path, set: &[&str]) -> RunConfig {
    let ov = Overrides {
        out: Some(out.to_path_buf()),
        set: set.iter().map(|s| s.to_string()).collect(),
        ..Overrides::default()
    };
    RunConfig::resolve(command, &ov).unwrap()
}

fn simulate(out: &Path, set: &[&str]) {
    run(&cfg(Command::Simulate, out, set)).unwrap();
}

fn fit_set<'a>(data: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v = vec![
        format!("observations={data}/observations.csv"),
        format!("locations={data}/locations.csv"),
        "n_burnin=40".into(),
        "n_keep=40".into(),
        "thin=2".into(),
        "n_chains=2".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn fit(data: &Path, out: &Path, extra: &[&str]) {
    let d = data.display().to_string();
    let set = fit_set(&d, extra);
    let set: Vec<&str> = set.iter().map(String::as_str).collect();
    run(&cfg(Command::Fit, out, &set)).unwrap();
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != TIMING_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulated_files_reload_and_round_trip() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["sites=30", "times=4"]);
    for name in ["observations.csv", "locations.csv", "truth.txt", "truth_field.csv", "truth_weights.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let obs = dir.path().join("observations.csv");
    let locs = dir.path().join("locations.csv");
    let (panel, locations) = load_panel(&obs, &locs, false).unwrap();
    assert_eq!((panel.sites(), panel.times(), panel.p()), (30, 4, 3));

    let copy = TempDir::new().unwrap();
    let ids: Vec<String> = locations.iter().map(|l| l.site_id.clone()).collect();
    write_observations(&copy.path().join("observations.csv"), &panel, &ids).unwrap();
    write_locations(&copy.path().join("locations.csv"), &locations).unwrap();
    assert_eq!(fs::read(&obs).unwrap(), fs::read(copy.path().join("observations.csv")).unwrap());
    assert_eq!(fs::read(&locs).unwrap(), fs::read(copy.path().join("locations.csv")).unwrap());
    let (again, _) = load_panel(&copy.path().join("observations.csv"), &locs, false).unwrap();
    assert_eq!(again, panel);

    let truth = read_key_values(&dir.path().join("truth.txt")).unwrap();
    assert!(truth.iter().any(|(k, v)| k == "gamma" && v == "0.7"));
}

#[test]
fn fit_directory_round_trips() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["sites=12", "times=3", "m=3"]);
    let (panel, locations) = load_panel(&dir.path().join("observations.csv"), &dir.path().join("locations.csv"), true).unwrap();
    let frame = convospat_core::build_taper_sets(locations.clone(), 3).unwrap();
    let ctx = ModelContext::poisson(&panel, &frame, Priors::default());
    for scheme in [Scheme::Global, Scheme::Adaptive] {
        let samples = run_chains(&ChainConfig::short(20, 20, 2, 2, 5), &ctx, scheme).unwrap();
        let out = TempDir::new().unwrap();
        let fit_out = out.path().join("fit");
        fit(dir.path(), &fit_out, &[&format!("model={scheme}"), "m=3"]);
        let (info, _, _) = read_fit(&fit_out).unwrap();
        let copy = out.path().join("copy");
        fs::create_dir_all(&copy).unwrap();
        write_fit(&copy, &info, &locations, &samples).unwrap();
        let (info2, locs2, back) = read_fit(&copy).unwrap();
        assert_eq!(info2, info);
        assert_eq!(locs2, locations);
        for (a, b) in samples.chains.iter().zip(&back.chains) {
            assert_eq!(a.iterations, b.iterations);
            assert_eq!(a.beta, b.beta);
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.tau2, b.tau2);
            assert_eq!(a.alpha, b.alpha);
            assert_eq!(a.psi, b.psi);
            assert_eq!(a.loglik, b.loglik);
        }
    }
}

#[test]
fn fit_writes_one_sample_file_per_chain() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), &["sites=15", "times=3"]);
    let out = dir.path().join("fit");
    fit(dir.path(), &out, &["n_chains=3", "m=4"]);
    for c in 1..=3 {
        assert!(out.join(format!("samples_chain{c}.csv")).exists());
        assert!(out.join(format!("loglik_chain{c}.csv")).exists());
    }
    assert!(!out.join("samples_chain4.csv").exists());
    let timing = read_key_values(&out.join(TIMING_FILE)).unwrap();
    let secs: f64 = timing.iter().find(|(k, _)| k == "sampling_seconds").unwrap().1.parse().unwrap();
    assert!(secs > 0.0);

    run(&cfg(Command::Assess, &out, &[])).unwrap();
    run(&cfg(Command::Summarize, &out, &[])).unwrap();
    run(&cfg(Command::Correlations, &out, &[])).unwrap();
    let head = csv_rows(&out.join("summaries.csv"))[0].clone();
    assert_eq!(head, SUMMARY_HEADER);
    let rows = csv_rows(&out.join("summaries.csv"));
    assert_eq!(rows[1][0], "beta_intercept");
    assert_eq!(rows[1][4], "NA");
    assert_ne!(rows[2][4], "NA");
    assert_eq!(csv_rows(&out.join("convergence.csv"))[0], ["chain", "parameter", "geweke_z"]);
    assert_eq!(csv_rows(&out.join("correlations.csv"))[0], ["site_k", "site_i", "distance", "spatial_corr"]);
}

#[test]
fn simulate_and_fit_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        simulate(d.path(), &["sites=20", "times=3", "seed=11"]);
        fit(d.path(), &d.path().join("fit"), &["model=adaptive", "m=4", "seed=3"]);
    }
    assert_eq!(files(a.path()).len(), 5);
    for sub in [PathBuf::new(), PathBuf::from("fit")] {
        let (fa, fb) = (files(&a.path().join(&sub)), files(&b.path().join(&sub)));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert!(x == y, "{} differs", x.0);
        }
    }
}

#[test]
fn single_site_dataset() {
    let dir = TempDir::new().unwrap();
    let out = run(&cfg(Command::Simulate, dir.path(), &["sites=1", "times=5"])).unwrap();
    assert_eq!(out.warnings.len(), 1);
    let (panel, locs) = load_panel(&dir.path().join("observations.csv"), &dir.path().join("locations.csv"), false).unwrap();
    assert_eq!((panel.sites(), panel.times(), locs.len()), (1, 5, 1));
    let w = csv_rows(&dir.path().join("truth_weights.csv"));
    assert_eq!(w.len(), 2);
    assert_eq!(w[1][2], "1");
}

// ---------------------------------------------------------------- fixtures

const LOCS: &str = "site_id,easting,northing\na,0,0\nb,1,0\nc,0,2\n";

fn load_error(obs: &str) -> CliError {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("l.csv"), LOCS).unwrap();
    fs::write(dir.path().join("o.csv"), obs).unwrap();
    load_panel(&dir.path().join("o.csv"), &dir.path().join("l.csv"), false).unwrap_err()
}

fn good_obs() -> String {
    let mut s = String::from("site_id,time,y,e,x\n");
    for id in ["a", "b", "c"] {
        for t in 1..=2 {
            s.push_str(&format!("{id},{t},3,2.5,0.{t}\n"));
        }
    }
    s
}

#[test]
fn well_formed_fixture_loads() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("l.csv"), LOCS).unwrap();
    fs::write(dir.path().join("o.csv"), good_obs()).unwrap();
    let (p, _) = load_panel(&dir.path().join("o.csv"), &dir.path().join("l.csv"), false).unwrap();
    assert_eq!(p.covariate_names(), ["intercept", "x"]);
    assert_eq!(p.y(), [3; 6]);
}

#[test]
fn malformed_observation_fixtures_are_rejected() {
    let good = good_obs();
    let cases: Vec<(String, Option<u64>, &str)> = vec![
        (format!("{good}b,2,1,1.0,0\n"), Some(8), "duplicate cell"),
        (good.replace("b,1,3,2.5", "b,1,3,0"), Some(4), "e must be positive"),
        (good.replace("c,2,3", "q,2,3"), Some(7), "unknown site_id"),
        (good.replace("a,2,3", "a,2,3.5"), Some(3), "nonnegative integer"),
        (good.replace("a,2,3", "a,2,-1"), Some(3), "nonnegative integer"),
        (good.replace("a,1,3", "a,0,3"), Some(2), "time must be"),
        (good.replace("c,2,3,2.5,0.2\n", ""), None, "missing cell"),
        (good.replace("b,1,3,2.5,0.1", "b,1,3,2.5,abc"), Some(4), ""),
        (good.replace("site_id,time", "site,time"), Some(1), ""),
        (good.replace(",x\n", ",intercept\n"), Some(1), "intercept"),
        ("site_id,time,y,e\n".into(), None, "no observations"),
    ];
    for (text, line, msg) in cases {
        match load_error(&text) {
            CliError::Load { line: l, msg: m, .. } => {
                assert_eq!(l, line, "{m}");
                assert!(m.contains(msg), "{m}");
            }
            e => panic!("unexpected {e}"),
        }
    }
}

#[test]
fn malformed_location_fixtures_are_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("l.csv");
    for bad in [
        "site_id,easting,northing\na,0,0\na,1,1\n",
        "site_id,easting,northing\na,zero,0\n",
        "site_id,easting,northing\n",
        "site_id,x,y\na,0,0\n",
        "site_id,easting,northing\na,NaN,0\n",
    ] {
        fs::write(&path, bad).unwrap();
        assert!(matches!(read_locations(&path), Err(CliError::Load { .. })), "{bad}");
    }
}

/// Writes a fit directory with every draw identical. `m = 1` gives the
/// identity weight matrix.
fn identical_fit(dir: &Path, scheme: &str, m: usize, ll: &[f64]) {
    let sites = 3;
    let times = ll.len() / sites;
    let info = format!(
        "model={scheme}\nm={m}\nrequested_m={m}\nsites={sites}\ntimes={times}\nn_chains=1\nn_burnin=0\n\
         n_keep=3\nthin=1\nseed=1\ncovariates=intercept\ncovariate_sds=1\nalpha_lo=0.001\nalpha_hi=100\n"
    );
    fs::write(dir.join("fit_info.txt"), info).unwrap();
    fs::write(dir.join("locations.csv"), LOCS).unwrap();
    let alpha = if scheme == "global" { ",alpha" } else { "" };
    let mut s = format!("iteration,beta_intercept,gamma,tau2{alpha}\n");
    let mut l = String::from("iteration");
    for id in ["a", "b", "c"] {
        for t in 1..=times {
            l.push_str(&format!(",ll_{id}_{t}"));
        }
    }
    l.push('\n');
    let mut psi = String::from("iteration");
    for id in ["a", "b", "c"] {
        for r in 1..=m {
            psi.push_str(&format!(",psi_{id}_{r}"));
        }
    }
    psi.push('\n');
    for it in 1..=3 {
        s.push_str(&format!("{it},0.1,0.5,0.2{}\n", if alpha.is_empty() { "" } else { ",1.5" }));
        l.push_str(&it.to_string());
        for v in ll {
            l.push_str(&format!(",{v}"));
        }
        l.push('\n');
        psi.push_str(&it.to_string());
        for _ in 0..sites {
            for r in 0..m {
                psi.push_str(if r == 0 { ",1" } else { ",0" });
            }
        }
        psi.push('\n');
    }
    fs::write(dir.join("samples_chain1.csv"), s).unwrap();
    fs::write(dir.join("loglik_chain1.csv"), l).unwrap();
    if scheme == "adaptive" {
        fs::write(dir.join("psi_chain1.csv"), psi).unwrap();
    }
}

#[test]
fn assess_on_identical_draws() {
    let dir = TempDir::new().unwrap();
    identical_fit(dir.path(), "global", 1, &[-0.5, -2.0, -1.0]);
    run(&cfg(Command::Assess, dir.path(), &[])).unwrap();
    let kv = read_key_values(&dir.path().join("fit_statistics.txt")).unwrap();
    let get = |k: &str| -> f64 { kv.iter().find(|(n, _)| n == k).unwrap().1.parse().unwrap() };
    assert_eq!(get("p_w"), 0.0);
    assert!((get("waic") - 7.0).abs() < 1e-12);
    assert!((get("lmpl") + 3.5).abs() < 1e-12);
    assert_eq!(get("draws"), 3.0);
}

#[test]
fn correlations_under_identity_weights() {
    let dir = TempDir::new().unwrap();
    identical_fit(dir.path(), "global", 1, &[-1.0; 3]);
    run(&cfg(Command::Correlations, dir.path(), &[])).unwrap();
    let rows = csv_rows(&dir.path().join("correlations.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert_eq!(r[0], r[1]);
        assert_eq!(r[2], "0");
        assert_eq!(r[3], "1");
    }

    let dir = TempDir::new().unwrap();
    identical_fit(dir.path(), "adaptive", 2, &[-1.0; 3]);
    run(&cfg(Command::Correlations, dir.path(), &[])).unwrap();
    let rows = csv_rows(&dir.path().join("correlations.csv"));
    assert!(rows.len() > 4);
    for r in &rows[1..] {
        let c: f64 = r[3].parse().unwrap();
        assert_eq!(c, if r[0] == r[1] { 1.0 } else { 0.0 }, "{r:?}");
    }
}

// ---------------------------------------------------------------- binary

fn binary(args: &[&str]) -> (i32, String, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_convospat"))
        .args(args)
        .env("CONVOSPAT_THREADS", "1")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn exit_statuses_and_error_lines() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().display().to_string();
    let (code, stdout, _) = binary(&["simulate", "--out", &d, "--seed", "2", "--set", "sites=10", "--set", "times=2"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("observations.csv"));

    let cases: [(&[&str], i32, &str); 5] = [
        (&["simulate", "--bogus"], 2, "usage"),
        (&["fit", "--model", "banana", "--out", &d], 2, "usage"),
        (&["fit", "--set", "colour=red"], 3, "config"),
        (&["assess", "--out", &d], 5, "input"),
        (&["fit", "--out", &d, "--set", "observations=/nonexistent/o.csv", "--set", "locations=/nonexistent/l.csv"], 4, "io"),
    ];
    for (args, want, category) in cases {
        let (code, stdout, stderr) = binary(args);
        assert_eq!(code, want, "{args:?}: {stderr}");
        assert!(stdout.is_empty());
        let lines: Vec<&str> = stderr.lines().collect();
        assert_eq!(lines.len(), 1, "{stderr}");
        assert!(lines[0].starts_with(&format!("error: {category}: ")), "{stderr}");
    }
    let (code, stdout, _) = binary(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("correlations"));
}

#[test]
fn config_file_with_overrides() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("sim.conf"), "# simulation\nsites = 8\ntimes=2\nseed=4\nout=data\n").unwrap();
    let conf = dir.path().join("sim.conf").display().to_string();
    let (code, _, stderr) = binary(&["simulate", "--config", &conf, "--seed", "5"]);
    assert_eq!(code, 0, "{stderr}");
    let truth = read_key_values(&dir.path().join("data/truth.txt")).unwrap();
    assert!(truth.contains(&("seed".into(), "5".into())));
    assert!(truth.contains(&("sites".into(), "8".into())));
}
