//! Indirect standardisation of expected counts and standardised rates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};

/// The age bands of the shipped default grouping.
pub const AGE_BANDS: [&str; 8] = ["0-4", "5-14", "15-24", "25-44", "45-64", "65-74", "75-84", "85+"];

/// Default group labels: both sexes crossed with [`AGE_BANDS`], males first.
pub fn default_groups() -> Vec<String> {
    ["M", "F"]
        .iter()
        .flat_map(|s| AGE_BANDS.iter().map(move |b| alloc::format!("{s}_{b}")))
        .collect()
}

/// Per-site list sizes by group plus the national rate of each group.
#[derive(Debug, Clone, PartialEq)]
pub struct ListSizeTable {
    sites: Vec<String>,
    groups: Vec<String>,
    /// Site-major `sites x groups`.
    counts: Vec<f64>,
    rates: Vec<f64>,
}

impl ListSizeTable {
    pub fn new(sites: Vec<String>, groups: Vec<String>, counts: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("at least one group is required"));
        }
        check_len("list-size counts", sites.len() * groups.len(), counts.len())?;
        check_len("group rates", groups.len(), rates.len())?;
        if let Some(c) = counts.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(invalid(alloc::format!("list sizes must be finite and nonnegative, got {c}")));
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid(alloc::format!("group rates must lie in [0, 1], got {r}")));
        }
        Ok(Self {
            sites,
            groups,
            counts,
            rates,
        })
    }

    pub fn sites(&self) -> &[String] {
        &self.sites
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn counts(&self, site: usize) -> &[f64] {
        let g = self.groups.len();
        &self.counts[site * g..(site + 1) * g]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Per-site expected counts. Sites with `E = 0` are listed in `excluded`
/// and should be dropped before modelling.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub values: Vec<f64>,
    pub excluded: Vec<usize>,
}

impl ExpectedCounts {
    pub fn excluded_sites<'a>(&self, table: &'a ListSizeTable) -> Vec<&'a str> {
        self.excluded.iter().map(|&k| table.sites[k].as_str()).collect()
    }
}

/// `E_k = sum_g listsize_kg * rate_g`.
pub fn expected_counts(table: &ListSizeTable) -> ExpectedCounts {
    let mut values = Vec::with_capacity(table.sites.len());
    let mut excluded = Vec::new();
    for k in 0..table.sites.len() {
        let e: f64 = table.counts(k).iter().zip(&table.rates).map(|(c, r)| c * r).sum();
        if e <= 0.0 {
            excluded.push(k);
        }
        values.push(e);
    }
    ExpectedCounts { values, excluded }
}

/// Repeats per-site values across `times` periods (site-major output).
pub fn replicate_over_time(per_site: &[f64], times: usize) -> Vec<f64> {
    per_site
        .iter()
        .flat_map(|&v| core::iter::repeat_n(v, times))
        .collect()
}

/// Rescales `e_raw` so its total equals the total observed count.
pub fn scale_expected(e_raw: &[f64], y: &[u64]) -> Result<Vec<f64>> {
    check_len("expected counts", y.len(), e_raw.len())?;
    if e_raw.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(invalid("expected counts must be finite and nonnegative"));
    }
    let total_e: f64 = e_raw.iter().sum();
    let total_y: f64 = y.iter().map(|&v| v as f64).sum();
    if !(total_e > 0.0) {
        return Err(Error::Degenerate("expected counts sum to zero".to_string()));
    }
    if total_y == 0.0 {
        return Err(Error::Degenerate("observed counts sum to zero".to_string()));
    }
    let factor = total_y / total_e;
    // Already scaled up to rounding: leave untouched so the map is idempotent.
    if (factor - 1.0).abs() < 1e-12 {
        return Ok(e_raw.to_vec());
    }
    Ok(e_raw.iter().map(|e| e * factor).collect())
}

/// Standardised rate `Y / E` per cell.
pub fn spr(y: &[u64], e: &[f64]) -> Result<Vec<f64>> {
    check_len("expected counts", y.len(), e.len())?;
    if let Some(bad) = e.iter().position(|v| !(*v > 0.0)) {
        return Err(invalid(alloc::format!("expected count must be positive in cell {bad}")));
    }
    Ok(y.iter().zip(e).map(|(&y, e)| y as f64 / e).collect())
}
