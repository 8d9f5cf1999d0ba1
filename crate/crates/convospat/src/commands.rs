//! The five commands. Each takes a resolved [`RunConfig`] and returns the
//! files it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use convospat_core::assessment::{fit_statistics, summarize, FitStatistics, ParameterSummary};
use convospat_core::latent::spatial_corr;
use convospat_core::mcmc::{geweke, ChainConfig, PosteriorSamples};
use convospat_core::simulate::{simulate_dataset, site_label, SimulationConfig, TruthWeights};
use convospat_core::weights::{adaptive_weights, global_kernel_weights, AdaptiveWeightState};
use convospat_core::{build_taper_sets, ModelContext, Priors, Scheme, SpatialFrame};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, join, load_panel, reader, write_key_values, write_locations, write_observations, write_weights, writer};
use crate::parallel::{run_chains_parallel, thread_cap};
use crate::samples::{read_fit, write_fit, FitInfo};

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Non-fatal notes for stderr.
    pub warnings: Vec<String>,
    /// Text for stdout besides the file list.
    pub report: Option<String>,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Fit => cmd_fit(cfg),
        Command::Assess => cmd_assess(cfg),
        Command::Correlations => cmd_correlations(cfg),
        Command::Summarize => cmd_summarize(cfg),
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, std::io::Error::other(e.to_string()))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- simulate

/// Builds the simulator configuration from `cfg` (no files are read except
/// an explicit `psi_file`).
pub fn simulation_config(cfg: &RunConfig) -> Result<SimulationConfig> {
    let d = SimulationConfig::default();
    let sites = cfg.usize("sites", d.sites)?;
    let m = cfg.usize("m", d.m)?;
    let truth = match cfg.string("truth", "global") {
        "global" => TruthWeights::Global {
            alpha: cfg.f64("alpha", 1.0)?,
        },
        "boundary" => TruthWeights::Boundary {
            alpha: cfg.f64("alpha", 2.0)?,
            offset: cfg.f64("offset", 0.5)?,
        },
        "adaptive" => {
            let path = cfg.path("psi_file").ok_or_else(|| {
                CliError::Config("truth=adaptive requires psi_file (site_id,rank,psi)".into())
            })?;
            TruthWeights::Adaptive {
                psi: read_psi_file(&path, sites, m.min(sites))?,
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown truth {other:?} (use global, adaptive or boundary)"
            )))
        }
    };
    Ok(SimulationConfig {
        sites,
        times: cfg.usize("times", d.times)?,
        m,
        beta: cfg.f64_list("beta", &d.beta)?,
        gamma: cfg.f64("gamma", d.gamma)?,
        tau2: cfg.f64("tau2", d.tau2)?,
        truth,
        side: cfg.f64("side", d.side)?,
        e_range: (cfg.f64("e_min", d.e_range.0)?, cfg.f64("e_max", d.e_range.1)?),
        e_time_constant: cfg.bool("e_time_constant", d.e_time_constant)?,
        latent: cfg.bool("latent", d.latent)?,
        seed: cfg.u64("seed", d.seed)?,
    })
}

/// Reads `site_id,rank,psi` (or `psi_mean`) rows for the simulator's site
/// labels into a `sites x width` row-major vector.
fn read_psi_file(path: &Path, sites: usize, width: usize) -> Result<Vec<f64>> {
    let mut rdr = reader(path)?;
    let head = rdr.headers().map_err(csv_io(path))?.clone();
    if head.len() != 3 || &head[0] != "site_id" || &head[1] != "rank" {
        return Err(CliError::load(path, Some(1), "expected header site_id,rank,psi"));
    }
    let mut psi = vec![f64::NAN; sites * width];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::load(path, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let k = (0..sites)
            .find(|&k| site_label(k, sites) == rec[0])
            .ok_or_else(|| CliError::load(path, line, format!("unknown site_id {:?}", &rec[0])))?;
        let r: usize = rec[1]
            .parse()
            .ok()
            .filter(|r| (1..=width).contains(r))
            .ok_or_else(|| CliError::load(path, line, format!("rank must lie in 1..={width}")))?;
        psi[k * width + r - 1] = rec[2]
            .parse()
            .map_err(|_| CliError::load(path, line, "psi is not a number"))?;
    }
    if psi.iter().any(|v| v.is_nan()) {
        return Err(CliError::load(path, None, "every site needs one psi per rank"));
    }
    Ok(psi)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let out = cfg.required_path("out")?;
    let sim = simulation_config(cfg)?;
    let data = simulate_dataset(&sim)?;
    ensure_dir(&out)?;
    let ids: Vec<String> = data.frame.locations().iter().map(|l| l.site_id.clone()).collect();

    let obs = join(&out, "observations.csv");
    write_observations(&obs, &data.panel, &ids)?;
    let locs = join(&out, "locations.csv");
    write_locations(&locs, data.frame.locations())?;

    let mut truth = vec![
        ("seed", sim.seed.to_string()),
        ("sites", sim.sites.to_string()),
        ("times", sim.times.to_string()),
        ("m", data.frame.m().to_string()),
        ("beta", fmt_list(&sim.beta)),
        ("gamma", sim.gamma.to_string()),
        ("tau2", sim.tau2.to_string()),
    ];
    match &sim.truth {
        TruthWeights::Global { alpha } => {
            truth.push(("truth", "global".into()));
            truth.push(("alpha", alpha.to_string()));
        }
        TruthWeights::Adaptive { .. } => truth.push(("truth", "adaptive".into())),
        TruthWeights::Boundary { alpha, offset } => {
            truth.push(("truth", "boundary".into()));
            truth.push(("alpha", alpha.to_string()));
            truth.push(("offset", offset.to_string()));
        }
    }
    truth.extend([
        ("side", sim.side.to_string()),
        ("e_min", sim.e_range.0.to_string()),
        ("e_max", sim.e_range.1.to_string()),
        ("e_time_constant", sim.e_time_constant.to_string()),
        ("latent", sim.latent.to_string()),
    ]);
    let truth: Vec<(String, String)> = truth.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let truth_path = join(&out, "truth.txt");
    write_key_values(&truth_path, &truth)?;

    let field = join(&out, "truth_field.csv");
    let mut w = writer(&field)?;
    w.write_record(["site_id", "time", "cluster", "theta", "phi"])
        .map_err(csv_io(&field))?;
    let t = &data.truth;
    for (k, id) in ids.iter().enumerate() {
        for time in 0..sim.times {
            w.write_record([
                id.clone(),
                (time + 1).to_string(),
                t.clusters[k].to_string(),
                t.theta.get(k, time).to_string(),
                t.phi.get(k, time).to_string(),
            ])
            .map_err(csv_io(&field))?;
        }
    }
    flush(w, &field)?;
    let weights = join(&out, "truth_weights.csv");
    write_weights(&weights, &t.weights, &data.frame)?;

    Ok(Outcome {
        files: vec![obs, locs, truth_path, field, weights],
        warnings: frame_warnings(&data.frame),
        report: None,
    })
}

fn frame_warnings(frame: &SpatialFrame) -> Vec<String> {
    frame
        .warnings()
        .iter()
        .map(|w| match w {
            convospat_core::spatial::FrameWarning::TaperClamped { requested, used } => {
                format!("m={requested} exceeds the number of sites; using m={used}")
            }
        })
        .collect()
}

// ---------------------------------------------------------------- fit

/// Chain settings from `cfg`; defaults are the long protocol.
pub fn chain_config(cfg: &RunConfig) -> Result<ChainConfig> {
    let d = ChainConfig::default();
    let c = ChainConfig {
        n_burnin: cfg.usize("n_burnin", d.n_burnin)?,
        n_keep: cfg.usize("n_keep", d.n_keep)?,
        thin: cfg.usize("thin", d.thin)?,
        n_chains: cfg.usize("n_chains", d.n_chains)?,
        seed: cfg.u64("seed", d.seed)?,
        adapt_interval: cfg.usize("adapt_interval", d.adapt_interval)?,
        store_psi: cfg.bool("store_psi", d.store_psi)?,
        store_loglik: cfg.bool("store_loglik", d.store_loglik)?,
        ..d
    };
    c.validate()?;
    Ok(c)
}

pub fn priors(cfg: &RunConfig) -> Result<Priors> {
    let d = Priors::default();
    let p = Priors {
        beta_var: cfg.f64("beta_var", d.beta_var)?,
        tau2_a: cfg.f64("tau2_a", d.tau2_a)?,
        tau2_b: cfg.f64("tau2_b", d.tau2_b)?,
        alpha_lo: cfg.f64("alpha_lo", d.alpha_lo)?,
        alpha_hi: cfg.f64("alpha_hi", d.alpha_hi)?,
    };
    p.validate()?;
    Ok(p)
}

pub fn parse_scheme(s: &str) -> Result<Scheme> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown model {s:?} (use global or adaptive)")))
}

/// Name of the timing record written by `fit`.
pub const TIMING_FILE: &str = "timing.txt";

pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let scheme = parse_scheme(cfg.string("model", "global"))?;
    let m = cfg.usize("m", 8)?;
    let chains = chain_config(cfg)?;
    let priors = priors(cfg)?;
    let obs = cfg.required_path("observations")?;
    let locs = cfg.required_path("locations")?;
    let out = cfg.required_path("out")?;
    let standardize = cfg.bool("standardize", true)?;

    let (panel, locations) = load_panel(&obs, &locs, standardize)?;
    let frame = build_taper_sets(locations.clone(), m)?;
    let ctx = ModelContext::poisson(&panel, &frame, priors);
    ensure_dir(&out)?;

    let start = Instant::now();
    let samples = run_chains_parallel(&chains, &ctx, scheme, thread_cap())?;
    let seconds = start.elapsed().as_secs_f64();

    let info = FitInfo {
        scheme,
        m: frame.m(),
        requested_m: m,
        sites: panel.sites(),
        times: panel.times(),
        n_chains: chains.n_chains,
        n_burnin: chains.n_burnin,
        n_keep: chains.n_keep,
        thin: chains.thin,
        seed: chains.seed,
        covariate_names: panel.covariate_names().to_vec(),
        covariate_sds: panel.covariate_sds().to_vec(),
        alpha_lo: priors.alpha_lo,
        alpha_hi: priors.alpha_hi,
    };
    write_fit(&out, &info, &locations, &samples)?;
    let timing = join(&out, TIMING_FILE);
    write_key_values(
        &timing,
        &[
            ("model".into(), scheme.to_string()),
            ("m".into(), frame.m().to_string()),
            ("sampling_seconds".into(), seconds.to_string()),
        ],
    )?;

    let mut files = vec![join(&out, crate::samples::FIT_INFO)];
    files.extend((1..=chains.n_chains).map(|c| join(&out, &format!("samples_chain{c}.csv"))));
    files.push(timing);
    Ok(Outcome {
        files,
        warnings: frame_warnings(&frame),
        report: Some(format!("sampling_seconds={seconds}")),
    })
}

/// Reads the `sampling_seconds` entry of a fit directory's timing record.
pub fn read_sampling_seconds(fit_dir: &Path) -> Result<f64> {
    let path = join(fit_dir, TIMING_FILE);
    let kv = crate::io::read_key_values(&path)?;
    kv.iter()
        .find(|(k, _)| k == "sampling_seconds")
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| CliError::load(&path, None, "missing sampling_seconds"))
}

// ---------------------------------------------------------------- post-processing

fn post_dirs(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let fit_dir = cfg
        .path("fit_dir")
        .or_else(|| cfg.path("out"))
        .ok_or_else(|| CliError::Config(format!("{} requires fit_dir", cfg.command)))?;
    let out = cfg.path("out").unwrap_or_else(|| fit_dir.clone());
    if !join(&fit_dir, crate::samples::FIT_INFO).exists() {
        return Err(CliError::load(
            join(&fit_dir, crate::samples::FIT_INFO),
            None,
            "no fit found (missing sample files)",
        ));
    }
    Ok((fit_dir, out))
}

/// Relative-rate multipliers: none for the intercept, one unit of the
/// fitted covariate otherwise (one SD when covariates were standardised).
fn rr_multipliers(info: &FitInfo) -> Vec<Option<f64>> {
    (0..info.p()).map(|i| (i > 0).then_some(1.0)).collect()
}

pub const SUMMARY_HEADER: [&str; 7] = ["name", "median", "lo95", "hi95", "rr_median", "rr_lo95", "rr_hi95"];

fn write_summaries(path: &Path, rows: &[ParameterSummary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_io(path))?;
    for r in rows {
        let (a, b, c) = match r.rr {
            Some((m, lo, hi)) => (m.to_string(), lo.to_string(), hi.to_string()),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        w.write_record([
            r.name.clone(),
            r.median.to_string(),
            r.lo95.to_string(),
            r.hi95.to_string(),
            a,
            b,
            c,
        ])
        .map_err(csv_io(path))?;
    }
    flush(w, path)
}

pub fn fit_report(stats: &FitStatistics) -> Vec<(String, String)> {
    vec![
        ("waic".into(), stats.waic.to_string()),
        ("p_w".into(), stats.p_w.to_string()),
        ("lppd".into(), stats.lppd.to_string()),
        ("lmpl".into(), stats.lmpl.to_string()),
        ("draws".into(), stats.draws.to_string()),
        ("cells".into(), stats.cells.to_string()),
    ]
}

pub fn cmd_assess(cfg: &RunConfig) -> Result<Outcome> {
    let (fit_dir, out) = post_dirs(cfg)?;
    let (info, _, samples) = read_fit(&fit_dir)?;
    if samples.chains.iter().any(|c| c.loglik.is_empty()) {
        return Err(CliError::load(&fit_dir, None, "pointwise log-likelihood files are missing"));
    }
    let stats = fit_statistics(&samples)?;
    ensure_dir(&out)?;
    let report = fit_report(&stats);
    let report_path = join(&out, "fit_statistics.txt");
    write_key_values(&report_path, &report)?;
    let summaries = join(&out, "summaries.csv");
    write_summaries(&summaries, &summarize(&samples, &rr_multipliers(&info))?)?;

    let warnings = stats
        .underflow_cells
        .iter()
        .map(|&c| {
            format!(
                "CPO underflow in cell (site index {}, time {}); its ln CPO is -inf",
                c / info.times,
                c % info.times + 1
            )
        })
        .collect();
    let text = report.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("\n");
    Ok(Outcome {
        files: vec![report_path, summaries],
        warnings,
        report: Some(text),
    })
}

pub fn cmd_summarize(cfg: &RunConfig) -> Result<Outcome> {
    let (fit_dir, out) = post_dirs(cfg)?;
    let (info, _, samples) = read_fit(&fit_dir)?;
    ensure_dir(&out)?;
    let summaries = join(&out, "summaries.csv");
    write_summaries(&summaries, &summarize(&samples, &rr_multipliers(&info))?)?;

    let conv = join(&out, "convergence.csv");
    let mut w = writer(&conv)?;
    w.write_record(["chain", "parameter", "geweke_z"]).map_err(csv_io(&conv))?;
    for ch in &samples.chains {
        let p = info.p();
        let mut series: Vec<(String, Vec<f64>)> = info
            .covariate_names
            .iter()
            .enumerate()
            .map(|(i, n)| (format!("beta_{n}"), ch.beta.iter().skip(i).step_by(p).copied().collect()))
            .collect();
        series.push(("gamma".into(), ch.gamma.clone()));
        series.push(("tau2".into(), ch.tau2.clone()));
        if !ch.alpha.is_empty() {
            series.push(("alpha".into(), ch.alpha.clone()));
        }
        for (name, x) in series {
            let z = match geweke(&x) {
                Ok(Some(z)) => z.to_string(),
                _ => "NA".into(),
            };
            w.write_record([(ch.chain + 1).to_string(), name, z])
                .map_err(csv_io(&conv))?;
        }
    }
    flush(w, &conv)?;
    Ok(Outcome {
        files: vec![summaries, conv],
        ..Outcome::default()
    })
}

/// Pairs per block when computing posterior-median correlations; bounds the
/// memory held for per-draw values.
const PAIR_BLOCK: usize = 512;

/// Posterior median spatial correlation of every overlapping pair `(k, i)`,
/// `k <= i`, evaluated per retained weight draw.
pub fn posterior_correlations(frame: &SpatialFrame, samples: &PosteriorSamples) -> Result<Vec<(usize, usize, f64)>> {
    let pairs = frame.overlapping_pairs();
    let n = samples.n_draws();
    if n == 0 {
        return Err(convospat_core::Error::TooFewDraws { need: 1, got: 0 }.into());
    }
    let width = frame.len() * frame.m();
    let weights_at = |chain: usize, s: usize| -> Result<convospat_core::SparseWeights> {
        let ch = &samples.chains[chain];
        Ok(match samples.scheme {
            Scheme::Global => global_kernel_weights(frame, ch.alpha[s])?,
            Scheme::Adaptive => {
                let psi = AdaptiveWeightState::from_rows(frame.m(), ch.psi[s * width..(s + 1) * width].to_vec())?;
                adaptive_weights(frame, &psi)?
            }
        })
    };
    if samples.scheme == Scheme::Adaptive && samples.chains.iter().any(|c| c.psi.len() != c.len() * width) {
        return Err(CliError::Config("correlations for the adaptive model need stored psi draws (store_psi=true)".into()));
    }
    let mut out = Vec::with_capacity(pairs.len());
    let mut values = vec![0.0; PAIR_BLOCK.min(pairs.len()) * n];
    for block in pairs.chunks(PAIR_BLOCK) {
        let mut d = 0;
        for (ci, ch) in samples.chains.iter().enumerate() {
            for s in 0..ch.len() {
                let w = weights_at(ci, s)?;
                for (b, &(k, i)) in block.iter().enumerate() {
                    values[b * n + d] = spatial_corr(&w, k, i);
                }
                d += 1;
            }
        }
        for (b, &(k, i)) in block.iter().enumerate() {
            out.push((k, i, convospat_core::stats::median(&values[b * n..(b + 1) * n])));
        }
    }
    Ok(out)
}

pub fn cmd_correlations(cfg: &RunConfig) -> Result<Outcome> {
    let (fit_dir, out) = post_dirs(cfg)?;
    let (info, locations, samples) = read_fit(&fit_dir)?;
    let frame = build_taper_sets(locations, info.requested_m)?;
    if frame.m() != info.m {
        return Err(CliError::load(&fit_dir, None, "taper size does not match the stored fit"));
    }
    let corr = posterior_correlations(&frame, &samples)?;
    ensure_dir(&out)?;
    let path = join(&out, "correlations.csv");
    let mut w = writer(&path)?;
    w.write_record(["site_k", "site_i", "distance", "spatial_corr"])
        .map_err(csv_io(&path))?;
    for (k, i, c) in corr {
        w.write_record([
            frame.location(k).site_id.clone(),
            frame.location(i).site_id.clone(),
            frame.distance(k, i).to_string(),
            c.to_string(),
        ])
        .map_err(csv_io(&path))?;
    }
    flush(w, &path)?;
    Ok(Outcome {
        files: vec![path],
        ..Outcome::default()
    })
}
