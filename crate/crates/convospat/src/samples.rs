//! The fit directory: run metadata plus per-chain draw files.
//!
//! ```text
//! fit_info.txt          key=value run metadata
//! locations.csv         the sites the model was fitted on, in model order
//! samples_chain<c>.csv  iteration,beta_<name>...,gamma,tau2[,alpha]
//! loglik_chain<c>.csv   iteration,ll_<site_id>_<time>... (pointwise log-likelihood)
//! psi_chain<c>.csv      iteration,psi_<site_id>_<rank>... (adaptive scheme)
//! psi_mean.csv          site_id,rank,psi_mean (adaptive scheme)
//! phi_mean.csv          site_id,time,phi_mean
//! acceptance.csv        chain,parameter,rate
//! ```
//!
//! Chains are numbered from 1 in file names; ranks and times from 1.

use std::path::Path;

use convospat_core::mcmc::{AcceptanceRates, ChainDraws, PosteriorSamples};
use convospat_core::{Location, Scheme};

use crate::error::{CliError, Result};
use crate::io::{join, read_key_values, read_locations, reader, write_key_values, write_locations, writer};

pub const FIT_INFO: &str = "fit_info.txt";
pub const FIT_LOCATIONS: &str = "locations.csv";

/// Metadata recorded next to the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub scheme: Scheme,
    pub m: usize,
    pub requested_m: usize,
    pub sites: usize,
    pub times: usize,
    pub n_chains: usize,
    pub n_burnin: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
    pub covariate_names: Vec<String>,
    /// Divisors applied to each covariate before fitting.
    pub covariate_sds: Vec<f64>,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl FitInfo {
    pub fn to_entries(&self) -> Vec<(String, String)> {
        [
            ("model", self.scheme.to_string()),
            ("m", self.m.to_string()),
            ("requested_m", self.requested_m.to_string()),
            ("sites", self.sites.to_string()),
            ("times", self.times.to_string()),
            ("n_chains", self.n_chains.to_string()),
            ("n_burnin", self.n_burnin.to_string()),
            ("n_keep", self.n_keep.to_string()),
            ("thin", self.thin.to_string()),
            ("seed", self.seed.to_string()),
            ("covariates", self.covariate_names.join(",")),
            ("covariate_sds", join_list(&self.covariate_sds)),
            ("alpha_lo", self.alpha_lo.to_string()),
            ("alpha_hi", self.alpha_hi.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_entries(entries: &[(String, String)], path: &Path) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            entries
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| CliError::load(path, None, format!("missing key {k}")))
        };
        fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| CliError::load(path, None, format!("bad value for {k}: {v:?}")))
        }
        let covariate_names: Vec<String> = get("covariates")?.split(',').map(str::to_string).collect();
        let covariate_sds = get("covariate_sds")?
            .split(',')
            .map(|v| num::<f64>(path, "covariate_sds", v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scheme: get("model")?
                .parse()
                .map_err(|e: convospat_core::Error| CliError::load(path, None, e.to_string()))?,
            m: num(path, "m", get("m")?)?,
            requested_m: num(path, "requested_m", get("requested_m")?)?,
            sites: num(path, "sites", get("sites")?)?,
            times: num(path, "times", get("times")?)?,
            n_chains: num(path, "n_chains", get("n_chains")?)?,
            n_burnin: num(path, "n_burnin", get("n_burnin")?)?,
            n_keep: num(path, "n_keep", get("n_keep")?)?,
            thin: num(path, "thin", get("thin")?)?,
            seed: num(path, "seed", get("seed")?)?,
            covariate_names,
            covariate_sds,
            alpha_lo: num(path, "alpha_lo", get("alpha_lo")?)?,
            alpha_hi: num(path, "alpha_hi", get("alpha_hi")?)?,
        })
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }
}

fn chain_file(kind: &str, chain: usize) -> String {
    format!("{kind}_chain{}.csv", chain + 1)
}

fn fmt_row(iteration: usize, values: &[f64]) -> Vec<String> {
    std::iter::once(iteration.to_string())
        .chain(values.iter().map(f64::to_string))
        .collect()
}

fn write_matrix(path: &Path, head: &[String], iterations: &[usize], values: &[f64]) -> Result<()> {
    let width = head.len() - 1;
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::io(path, std::io::Error::other(e.to_string()));
    w.write_record(head).map_err(err)?;
    for (it, row) in iterations.iter().zip(values.chunks_exact(width.max(1))) {
        w.write_record(fmt_row(*it, row)).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a matrix file written by [`write_matrix`]: returns the header,
/// iterations and row-major values.
fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<usize>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let head: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::load(path, Some(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if head.first().map(String::as_str) != Some("iteration") {
        return Err(CliError::load(path, Some(1), "first column must be iteration"));
    }
    let mut its = Vec::new();
    let mut vals = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            CliError::load(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line());
        its.push(
            rec[0]
                .parse()
                .map_err(|_| CliError::load(path, line, "bad iteration"))?,
        );
        for v in rec.iter().skip(1) {
            vals.push(
                v.parse::<f64>()
                    .map_err(|_| CliError::load(path, line, format!("not a number: {v:?}")))?,
            );
        }
    }
    Ok((head, its, vals))
}

fn scalar_header(info: &FitInfo) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    h.extend(info.covariate_names.iter().map(|n| format!("beta_{n}")));
    h.push("gamma".into());
    h.push("tau2".into());
    if info.scheme == Scheme::Global {
        h.push("alpha".into());
    }
    h
}

/// Writes every fit artefact except the timing record.
pub fn write_fit(dir: &Path, info: &FitInfo, locations: &[Location], samples: &PosteriorSamples) -> Result<()> {
    write_key_values(&join(dir, FIT_INFO), &info.to_entries())?;
    write_locations(&join(dir, FIT_LOCATIONS), locations)?;
    let ids: Vec<&str> = locations.iter().map(|l| l.site_id.as_str()).collect();
    let p = info.p();
    let head = scalar_header(info);
    for ch in &samples.chains {
        let mut rows = Vec::with_capacity(ch.len() * (head.len() - 1));
        for s in 0..ch.len() {
            rows.extend_from_slice(&ch.beta[s * p..(s + 1) * p]);
            rows.push(ch.gamma[s]);
            rows.push(ch.tau2[s]);
            if info.scheme == Scheme::Global {
                rows.push(ch.alpha[s]);
            }
        }
        write_matrix(&join(dir, &chain_file("samples", ch.chain)), &head, &ch.iterations, &rows)?;

        if !ch.loglik.is_empty() {
            let mut h = vec!["iteration".to_string()];
            for id in &ids {
                for t in 1..=info.times {
                    h.push(format!("ll_{id}_{t}"));
                }
            }
            write_matrix(&join(dir, &chain_file("loglik", ch.chain)), &h, &ch.iterations, &ch.loglik)?;
        }
        if !ch.psi.is_empty() {
            let mut h = vec!["iteration".to_string()];
            for id in &ids {
                for r in 1..=info.m {
                    h.push(format!("psi_{id}_{r}"));
                }
            }
            write_matrix(&join(dir, &chain_file("psi", ch.chain)), &h, &ch.iterations, &ch.psi)?;
        }
    }

    if let Some(psi) = samples.psi_mean() {
        let path = join(dir, "psi_mean.csv");
        let mut w = writer(&path)?;
        let err = |e: csv::Error| CliError::io(&path, std::io::Error::other(e.to_string()));
        w.write_record(["site_id", "rank", "psi_mean"]).map_err(err)?;
        for (k, id) in ids.iter().enumerate() {
            for r in 0..info.m {
                w.write_record([id.to_string(), (r + 1).to_string(), psi[k * info.m + r].to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }

    let phi = samples.phi_mean();
    let path = join(dir, "phi_mean.csv");
    let mut w = writer(&path)?;
    let err = |e: csv::Error| CliError::io(&path, std::io::Error::other(e.to_string()));
    w.write_record(["site_id", "time", "phi_mean"]).map_err(err)?;
    for (k, id) in ids.iter().enumerate() {
        for t in 0..info.times {
            w.write_record([id.to_string(), (t + 1).to_string(), phi[k * info.times + t].to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    write_acceptance(&join(dir, "acceptance.csv"), info, samples)
}

fn write_acceptance(path: &Path, info: &FitInfo, samples: &PosteriorSamples) -> Result<()> {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::io(path, std::io::Error::other(e.to_string()));
    w.write_record(["chain", "parameter", "rate"]).map_err(err)?;
    for ch in &samples.chains {
        let a = &ch.acceptance;
        let c = (ch.chain + 1).to_string();
        let mut rows: Vec<(String, f64)> = info
            .covariate_names
            .iter()
            .zip(&a.beta)
            .map(|(n, r)| (format!("beta_{n}"), *r))
            .collect();
        rows.push(("theta_mean".into(), mean(&a.theta)));
        rows.push(("gamma".into(), a.gamma));
        rows.push(("amplitude".into(), a.amplitude));
        match info.scheme {
            Scheme::Global => {
                rows.push(("alpha".into(), a.alpha));
                rows.push(("alpha_rescaled".into(), a.alpha_rescaled));
            }
            Scheme::Adaptive => rows.push(("psi_mean".into(), mean(&a.psi))),
        }
        for (name, rate) in rows {
            w.write_record([c.clone(), name, rate.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a fit directory back. Per-chain `phi` means and acceptance rates
/// are not restored; `psi` and log-likelihood draws are loaded when present.
pub fn read_fit(dir: &Path) -> Result<(FitInfo, Vec<Location>, PosteriorSamples)> {
    let info_path = join(dir, FIT_INFO);
    let info = FitInfo::from_entries(&read_key_values(&info_path)?, &info_path)?;
    let locations = read_locations(&join(dir, FIT_LOCATIONS))?;
    if locations.len() != info.sites {
        return Err(CliError::load(
            join(dir, FIT_LOCATIONS),
            None,
            format!("{} sites but fit_info records {}", locations.len(), info.sites),
        ));
    }
    let head = scalar_header(&info);
    let p = info.p();
    let cells = info.sites * info.times;
    let mut chains = Vec::with_capacity(info.n_chains);
    for c in 0..info.n_chains {
        let path = join(dir, &chain_file("samples", c));
        let (h, iterations, vals) = read_matrix(&path)?;
        if h != head {
            return Err(CliError::load(&path, Some(1), format!("expected header {}", head.join(","))));
        }
        let width = head.len() - 1;
        let mut draws = ChainDraws {
            chain: c,
            iterations,
            beta: Vec::new(),
            gamma: Vec::new(),
            tau2: Vec::new(),
            alpha: Vec::new(),
            psi: Vec::new(),
            loglik: Vec::new(),
            phi_mean: vec![0.0; cells],
            acceptance: AcceptanceRates::default(),
            scales_after_burnin: Vec::new(),
            scales_at_end: Vec::new(),
        };
        for row in vals.chunks_exact(width) {
            draws.beta.extend_from_slice(&row[..p]);
            draws.gamma.push(row[p]);
            draws.tau2.push(row[p + 1]);
            if info.scheme == Scheme::Global {
                draws.alpha.push(row[p + 2]);
            }
        }
        let ll_path = join(dir, &chain_file("loglik", c));
        if ll_path.exists() {
            let (h, its, vals) = read_matrix(&ll_path)?;
            if h.len() != cells + 1 || its != draws.iterations {
                return Err(CliError::load(&ll_path, None, "log-likelihood file does not match the samples file"));
            }
            draws.loglik = vals;
        }
        let psi_path = join(dir, &chain_file("psi", c));
        if psi_path.exists() {
            let (h, its, vals) = read_matrix(&psi_path)?;
            if h.len() != info.sites * info.m + 1 || its != draws.iterations {
                return Err(CliError::load(&psi_path, None, "psi file does not match the samples file"));
            }
            draws.psi = vals;
        }
        chains.push(draws);
    }
    let samples = PosteriorSamples {
        scheme: info.scheme,
        sites: info.sites,
        times: info.times,
        m: info.m,
        covariate_names: info.covariate_names.clone(),
        chains,
    };
    Ok((info, locations, samples))
}
