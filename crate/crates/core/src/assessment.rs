//! Model comparison (WAIC, LMPL) and posterior summaries.
//!
//! Log-likelihood matrices are draw-major: entry `s * cells + c` is the
//! log-likelihood of cell `c` under retained draw `s`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::stats::{log_sum_exp, quantile_sorted, sample_variance, sorted};

/// WAIC with its components. Lower `waic` is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waic {
    pub waic: f64,
    pub p_w: f64,
    pub lppd: f64,
}

/// LMPL with the cells whose CPO underflowed (their `ln CPO` is `-inf`).
#[derive(Debug, Clone, PartialEq)]
pub struct Lmpl {
    pub lmpl: f64,
    pub underflow_cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitStatistics {
    pub waic: f64,
    pub p_w: f64,
    pub lppd: f64,
    pub lmpl: f64,
    pub draws: usize,
    pub cells: usize,
    pub underflow_cells: Vec<usize>,
}

fn draws_of(loglik: &[f64], cells: usize) -> Result<usize> {
    if cells == 0 {
        return Err(invalid("log-likelihood matrix has no cells"));
    }
    if !loglik.len().is_multiple_of(cells) {
        return Err(invalid(alloc::format!(
            "log-likelihood matrix of length {} is not a multiple of {cells} cells",
            loglik.len()
        )));
    }
    let s = loglik.len() / cells;
    if s < 2 {
        return Err(Error::TooFewDraws { need: 2, got: s });
    }
    if loglik.iter().any(|v| v.is_nan()) {
        return Err(invalid("log-likelihood matrix contains NaN"));
    }
    Ok(s)
}

fn column(loglik: &[f64], cells: usize, c: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(loglik.iter().skip(c).step_by(cells).copied());
}

/// WAIC from a `draws x cells` matrix, with `p_w` the sum of per-cell sample
/// variances of the log-likelihood.
pub fn waic(loglik: &[f64], cells: usize) -> Result<Waic> {
    let s = draws_of(loglik, cells)?;
    let ln_s = libm::log(s as f64);
    let mut col = Vec::with_capacity(s);
    let (mut lppd, mut p_w) = (0.0, 0.0);
    for c in 0..cells {
        column(loglik, cells, c, &mut col);
        lppd += log_sum_exp(&col) - ln_s;
        let v = sample_variance(&col);
        p_w += if v.is_finite() { v } else { f64::INFINITY };
    }
    Ok(Waic {
        waic: -2.0 * (lppd - p_w),
        p_w,
        lppd,
    })
}

/// Sum over cells of `ln CPO`, where `CPO = S / sum_s exp(-l_s)` is the
/// harmonic mean of the pointwise likelihoods. Larger is better.
pub fn lmpl(loglik: &[f64], cells: usize) -> Result<Lmpl> {
    let s = draws_of(loglik, cells)?;
    let ln_s = libm::log(s as f64);
    let mut col = Vec::with_capacity(s);
    let mut total = 0.0;
    let mut underflow_cells = Vec::new();
    for c in 0..cells {
        column(loglik, cells, c, &mut col);
        if col.iter().all(|v| !v.is_finite()) {
            return Err(invalid(alloc::format!("cell {c} has no finite log-likelihood draw")));
        }
        col.iter_mut().for_each(|v| *v = -*v);
        let ln_cpo = ln_s - log_sum_exp(&col);
        if ln_cpo == f64::NEG_INFINITY {
            underflow_cells.push(c);
        }
        total += ln_cpo;
    }
    Ok(Lmpl {
        lmpl: total,
        underflow_cells,
    })
}

/// WAIC and LMPL from the pooled pointwise log-likelihood of every chain.
pub fn fit_statistics(samples: &PosteriorSamples) -> Result<FitStatistics> {
    let cells = samples.cells();
    let ll = samples.loglik_matrix();
    let w = waic(&ll, cells)?;
    let l = lmpl(&ll, cells)?;
    Ok(FitStatistics {
        waic: w.waic,
        p_w: w.p_w,
        lppd: w.lppd,
        lmpl: l.lmpl,
        draws: ll.len() / cells,
        cells,
        underflow_cells: l.underflow_cells,
    })
}

/// Median and equal-tailed 95% interval, optionally with the relative rate
/// `exp(beta * multiplier)` summarised the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// `(median, lo95, hi95)` of the relative rate.
    pub rr: Option<(f64, f64, f64)>,
}

impl ParameterSummary {
    /// Summary of a scalar sample; `rr_multiplier` adds the relative rate.
    pub fn from_draws(name: &str, draws: &[f64], rr_multiplier: Option<f64>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::TooFewDraws { need: 1, got: 0 });
        }
        let s = sorted(draws);
        let q = |p| quantile_sorted(&s, p);
        let rr = rr_multiplier.map(|m| {
            let rate = |p| libm::exp(m * q(p));
            (rate(0.5), rate(0.025), rate(0.975))
        });
        Ok(Self {
            name: name.to_string(),
            median: q(0.5),
            lo95: q(0.025),
            hi95: q(0.975),
            rr,
        })
    }
}

/// Summaries of every coefficient, then `gamma`, `tau2` and (global scheme)
/// `alpha`, pooling all chains. `rr_multipliers[i]` is the covariate change
/// (usually one standard deviation on the fitted scale) for which `beta_i`'s
/// relative rate is reported; `None` suppresses it, as for the intercept.
pub fn summarize(samples: &PosteriorSamples, rr_multipliers: &[Option<f64>]) -> Result<Vec<ParameterSummary>> {
    let p = samples.p();
    if rr_multipliers.len() != p {
        return Err(Error::DimensionMismatch {
            what: "relative-rate multipliers",
            expected: p,
            got: rr_multipliers.len(),
        });
    }
    let mut out = Vec::with_capacity(p + 3);
    for (i, name) in samples.covariate_names.iter().enumerate() {
        let label = alloc::format!("beta_{name}");
        out.push(ParameterSummary::from_draws(&label, &samples.beta(i), rr_multipliers[i])?);
    }
    out.push(ParameterSummary::from_draws("gamma", &samples.gamma(), None)?);
    out.push(ParameterSummary::from_draws("tau2", &samples.tau2(), None)?);
    let alpha = samples.alpha();
    if !alpha.is_empty() {
        out.push(ParameterSummary::from_draws("alpha", &alpha, None)?);
    }
    Ok(out)
}
