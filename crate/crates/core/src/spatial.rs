//! Site coordinates and the m-nearest-neighbour taper sets.
//!
//! The taper set of site `k` holds the `min(m, K)` sites closest to it,
//! including `k` itself. Site `k` always comes first; the rest follow by
//! ascending Euclidean distance with ties broken by ascending site index.
//! (Self-first only matters for coincident sites, where a lower-indexed
//! twin would otherwise push `k` out of its own set when `m` is small.)
//!
//! Everything downstream (weights, the sparse full conditionals, correlation
//! diagnostics) is indexed through these sets.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Result};

/// A site at planar (projected) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub site_id: String,
    pub easting: f64,
    pub northing: f64,
}

impl Location {
    pub fn new(site_id: impl Into<String>, easting: f64, northing: f64) -> Self {
        Self {
            site_id: site_id.into(),
            easting,
            northing,
        }
    }

    fn is_finite(&self) -> bool {
        self.easting.is_finite() && self.northing.is_finite()
    }
}

/// Straight-line distance between two sites.
pub fn euclidean_distance(a: &Location, b: &Location) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(invalid("non-finite coordinate"));
    }
    Ok(raw_distance(a, b))
}

#[inline]
fn raw_distance(a: &Location, b: &Location) -> f64 {
    let de = a.easting - b.easting;
    let dn = a.northing - b.northing;
    libm::sqrt(de * de + dn * dn)
}

/// Non-fatal conditions raised while building a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameWarning {
    /// `m` exceeded the number of sites and was clamped.
    TaperClamped { requested: usize, used: usize },
}

/// One entry of the reverse taper index: site `j` sits at position `rank` of
/// row `row`'s taper set, so `w[row][rank]` multiplies `theta(s_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaperEntry {
    pub row: usize,
    pub rank: usize,
}

/// Immutable site list plus taper sets and their transpose.
#[derive(Debug, Clone)]
pub struct SpatialFrame {
    locations: Vec<Location>,
    requested_m: usize,
    width: usize,
    taper: Vec<usize>,
    taper_dist: Vec<f64>,
    reverse_start: Vec<usize>,
    reverse: Vec<TaperEntry>,
    warnings: Vec<FrameWarning>,
}

/// Taper ordering for row `k`: `k` itself, then distance, then index.
#[inline]
fn taper_order(k: usize, a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    (a.1 != k)
        .cmp(&(b.1 != k))
        .then(a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal))
        .then(a.1.cmp(&b.1))
}

/// Reference taper set for site `k` from a full O(K log K) sort.
pub fn brute_force_taper_set(locations: &[Location], k: usize, m: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = locations
        .iter()
        .enumerate()
        .map(|(j, loc)| (raw_distance(&locations[k], loc), j))
        .collect();
    all.sort_by(|a, b| taper_order(k, a, b));
    all.into_iter().take(m.min(locations.len())).map(|(_, j)| j).collect()
}

/// Builds the frame: validates sites and computes every taper set.
///
/// `m > K` is clamped to `K` and recorded in [`SpatialFrame::warnings`].
pub fn build_taper_sets(locations: Vec<Location>, m: usize) -> Result<SpatialFrame> {
    let k_sites = locations.len();
    if k_sites == 0 {
        return Err(invalid("a frame needs at least one site"));
    }
    if m == 0 {
        return Err(invalid("taper size m must be at least 1"));
    }
    let mut seen = BTreeSet::new();
    for (k, loc) in locations.iter().enumerate() {
        if !loc.is_finite() {
            return Err(invalid(alloc::format!(
                "site {} (index {k}) has a non-finite coordinate",
                loc.site_id
            )));
        }
        if !seen.insert(loc.site_id.as_str()) {
            return Err(invalid(alloc::format!("duplicate site_id {}", loc.site_id)));
        }
    }

    let mut warnings = Vec::new();
    let width = m.min(k_sites);
    if width < m {
        warnings.push(FrameWarning::TaperClamped {
            requested: m,
            used: width,
        });
    }

    let mut taper = Vec::with_capacity(k_sites * width);
    let mut taper_dist = Vec::with_capacity(k_sites * width);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(k_sites);
    for k in 0..k_sites {
        scratch.clear();
        scratch.extend(
            locations
                .iter()
                .enumerate()
                .map(|(j, loc)| (raw_distance(&locations[k], loc), j)),
        );
        // Partial selection, then order only the kept prefix.
        if width < k_sites {
            scratch.select_nth_unstable_by(width - 1, |a, b| taper_order(k, a, b));
        }
        let kept = &mut scratch[..width];
        kept.sort_by(|a, b| taper_order(k, a, b));
        for &(d, j) in kept.iter() {
            taper.push(j);
            taper_dist.push(d);
        }
    }

    // Transpose of the taper relation, grouped by column site.
    let mut counts = alloc::vec![0usize; k_sites + 1];
    for &j in &taper {
        counts[j + 1] += 1;
    }
    for j in 0..k_sites {
        counts[j + 1] += counts[j];
    }
    let reverse_start = counts.clone();
    let mut fill = counts;
    let mut reverse = alloc::vec![TaperEntry { row: 0, rank: 0 }; taper.len()];
    for row in 0..k_sites {
        for rank in 0..width {
            let j = taper[row * width + rank];
            reverse[fill[j]] = TaperEntry { row, rank };
            fill[j] += 1;
        }
    }

    Ok(SpatialFrame {
        locations,
        requested_m: m,
        width,
        taper,
        taper_dist,
        reverse_start,
        reverse,
        warnings,
    })
}

impl SpatialFrame {
    /// Number of sites `K`.
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Effective taper size `min(m, K)`.
    pub fn m(&self) -> usize {
        self.width
    }

    pub fn requested_m(&self) -> usize {
        self.requested_m
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, k: usize) -> &Location {
        &self.locations[k]
    }

    pub fn warnings(&self) -> &[FrameWarning] {
        &self.warnings
    }

    /// Taper set of site `k`: `k` itself, then nearest first.
    pub fn taper_set(&self, k: usize) -> &[usize] {
        &self.taper[k * self.width..(k + 1) * self.width]
    }

    /// Distances matching [`taper_set`](Self::taper_set) entry by entry.
    pub fn taper_distances(&self, k: usize) -> &[f64] {
        &self.taper_dist[k * self.width..(k + 1) * self.width]
    }

    /// Rows whose taper set contains `j`, with `j`'s rank in each.
    pub fn containing(&self, j: usize) -> &[TaperEntry] {
        &self.reverse[self.reverse_start[j]..self.reverse_start[j + 1]]
    }

    /// Whether the taper sets of `k` and `i` share a site.
    pub fn overlaps(&self, k: usize, i: usize) -> bool {
        let a = self.taper_set(k);
        self.taper_set(i).iter().any(|j| a.contains(j))
    }

    pub fn distance(&self, k: usize, i: usize) -> f64 {
        raw_distance(&self.locations[k], &self.locations[i])
    }

    pub fn index_of(&self, site_id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.site_id == site_id)
    }

    /// All unordered pairs `(k, i)`, `k <= i`, whose taper sets overlap.
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for j in 0..self.len() {
            let rows = self.containing(j);
            for a in rows {
                for b in rows {
                    if a.row <= b.row {
                        pairs.insert((a.row, b.row));
                    }
                }
            }
        }
        pairs.into_iter().collect()
    }
}
