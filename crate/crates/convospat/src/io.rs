//! CSV and key-value file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written file reloads to bit-identical values and repeated runs produce
//! identical bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use convospat_core::standardize::ListSizeTable;
use convospat_core::{Location, ObservationPanel, SpatialFrame, SparseWeights};

use crate::error::{CliError, Result};

pub const LOCATIONS_HEADER: [&str; 3] = ["site_id", "easting", "northing"];
pub const OBSERVATIONS_FIXED: [&str; 4] = ["site_id", "time", "y", "e"];

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file))
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            CliError::load(path, line, format!("expected {expected_len} fields, found {len}"))
        }
        csv::ErrorKind::Utf8 { .. } => CliError::load(path, line, "invalid UTF-8"),
        other => CliError::load(path, line, format!("{other:?}")),
    }
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, path: &Path, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| csv_err(path, e))
}

fn finish<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(|e| CliError::io(path, e))
}

/// Reads the header and checks that it starts with `expected`.
fn header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<Vec<String>> {
    let h: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if h.len() < expected.len() || h.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(CliError::load(
            path,
            Some(1),
            format!("header must start with {}, got {}", expected.join(","), h.join(",")),
        ));
    }
    Ok(h)
}

fn parse_f64(path: &Path, line: u64, what: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| CliError::load(path, Some(line), format!("{what} is not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(CliError::load(path, Some(line), format!("{what} must be finite, got {v}")));
    }
    Ok(x)
}

/// Iterates data records with their file line numbers.
fn records(rdr: &mut csv::Reader<File>, path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

pub fn read_locations(path: &Path) -> Result<Vec<Location>> {
    let mut rdr = reader(path)?;
    let h = header(&mut rdr, path, &LOCATIONS_HEADER)?;
    if h.len() != 3 {
        return Err(CliError::load(path, Some(1), "locations file has exactly three columns"));
    }
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (line, rec) in records(&mut rdr, path)? {
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(CliError::load(path, Some(line), "empty site_id"));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(CliError::load(
                path,
                Some(line),
                format!("duplicate site_id {id:?} (first on line {first})"),
            ));
        }
        let x = parse_f64(path, line, "easting", &rec[1])?;
        let y = parse_f64(path, line, "northing", &rec[2])?;
        out.push(Location::new(id, x, y));
    }
    if out.is_empty() {
        return Err(CliError::load(path, None, "no sites"));
    }
    Ok(out)
}

pub fn write_locations(path: &Path, locations: &[Location]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &LOCATIONS_HEADER.map(String::from))?;
    for l in locations {
        write_row(&mut w, path, &[l.site_id.clone(), l.easting.to_string(), l.northing.to_string()])?;
    }
    finish(w, path)
}

/// Reads an observations file against the site order of `locations`. An
/// intercept column is prepended to the covariates in the file.
pub fn read_observations(path: &Path, locations: &[Location], standardize: bool) -> Result<ObservationPanel> {
    let mut rdr = reader(path)?;
    let h = header(&mut rdr, path, &OBSERVATIONS_FIXED)?;
    let cov_names: Vec<String> = h[4..].to_vec();
    if let Some(dup) = cov_names.iter().enumerate().find(|(i, n)| cov_names[..*i].contains(n)) {
        return Err(CliError::load(path, Some(1), format!("duplicate column {:?}", dup.1)));
    }
    if cov_names.iter().any(|n| n == "intercept") {
        return Err(CliError::load(path, Some(1), "the intercept is added automatically; remove the intercept column"));
    }
    let index: HashMap<&str, usize> = locations
        .iter()
        .enumerate()
        .map(|(k, l)| (l.site_id.as_str(), k))
        .collect();
    let q = cov_names.len();

    struct Row {
        line: u64,
        site: usize,
        time: usize,
        y: u64,
        e: f64,
        x: Vec<f64>,
    }
    let mut rows = Vec::new();
    let mut times = 0usize;
    for (line, rec) in records(&mut rdr, path)? {
        let site = *index
            .get(&rec[0])
            .ok_or_else(|| CliError::load(path, Some(line), format!("unknown site_id {:?}", &rec[0])))?;
        let time: usize = rec[1]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| CliError::load(path, Some(line), format!("time must be an integer >= 1, got {:?}", &rec[1])))?;
        let y: u64 = rec[2].parse().map_err(|_| {
            CliError::load(path, Some(line), format!("y must be a nonnegative integer, got {:?}", &rec[2]))
        })?;
        let e = parse_f64(path, line, "e", &rec[3])?;
        if e <= 0.0 {
            return Err(CliError::load(
                path,
                Some(line),
                format!("e must be positive, got {e} for site {} time {time}", &rec[0]),
            ));
        }
        let x = (0..q)
            .map(|i| parse_f64(path, line, &cov_names[i], &rec[4 + i]))
            .collect::<Result<Vec<_>>>()?;
        times = times.max(time);
        rows.push(Row { line, site, time, y, e, x });
    }
    if rows.is_empty() {
        return Err(CliError::load(path, None, "no observations"));
    }

    let sites = locations.len();
    let cells = sites * times;
    let p = q + 1;
    let mut filled: Vec<Option<u64>> = vec![None; cells];
    let mut y = vec![0u64; cells];
    let mut e = vec![0.0; cells];
    let mut x = vec![0.0; cells * p];
    for r in rows {
        let c = r.site * times + r.time - 1;
        if let Some(first) = filled[c] {
            return Err(CliError::load(
                path,
                Some(r.line),
                format!(
                    "duplicate cell (site {}, time {}), first on line {first}",
                    locations[r.site].site_id, r.time
                ),
            ));
        }
        filled[c] = Some(r.line);
        y[c] = r.y;
        e[c] = r.e;
        x[c * p] = 1.0;
        x[c * p + 1..(c + 1) * p].copy_from_slice(&r.x);
    }
    if let Some(c) = filled.iter().position(Option::is_none) {
        return Err(CliError::load(
            path,
            None,
            format!(
                "missing cell (site {}, time {}); times must run 1..{times} for every site",
                locations[c / times].site_id,
                c % times + 1
            ),
        ));
    }
    let names = std::iter::once("intercept".to_string()).chain(cov_names).collect();
    let mut panel = ObservationPanel::new(sites, times, y, e, x, names)?;
    if standardize {
        panel.standardize_covariates();
    }
    Ok(panel)
}

/// Loads locations and observations; sites follow the locations file order.
pub fn load_panel(observations: &Path, locations: &Path, standardize: bool) -> Result<(ObservationPanel, Vec<Location>)> {
    let locs = read_locations(locations)?;
    let panel = read_observations(observations, &locs, standardize)?;
    Ok((panel, locs))
}

/// Writes the panel's covariates as stored (intercept omitted).
pub fn write_observations(path: &Path, panel: &ObservationPanel, site_ids: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let mut head: Vec<String> = OBSERVATIONS_FIXED.map(String::from).to_vec();
    head.extend(panel.covariate_names()[1..].iter().cloned());
    write_row(&mut w, path, &head)?;
    let mut row = Vec::with_capacity(head.len());
    for k in 0..panel.sites() {
        for t in 0..panel.times() {
            let c = panel.cell(k, t);
            row.clear();
            row.push(site_ids[k].clone());
            row.push((t + 1).to_string());
            row.push(panel.y()[c].to_string());
            row.push(panel.e()[c].to_string());
            row.extend(panel.covariates(c)[1..].iter().map(f64::to_string));
            write_row(&mut w, path, &row)?;
        }
    }
    finish(w, path)
}

/// Reads `site_id,group,count` and `group,rate` files. Group order follows
/// first appearance in the rates file; site order follows `site_order` if
/// given, else first appearance. Missing (site, group) entries count as 0.
pub fn read_list_sizes(sizes: &Path, rates: &Path, site_order: Option<&[String]>) -> Result<ListSizeTable> {
    let mut rdr = reader(rates)?;
    header(&mut rdr, rates, &["group", "rate"])?;
    let mut groups: Vec<String> = Vec::new();
    let mut rate_values = Vec::new();
    for (line, rec) in records(&mut rdr, rates)? {
        if groups.iter().any(|g| g == &rec[0]) {
            return Err(CliError::load(rates, Some(line), format!("duplicate group {:?}", &rec[0])));
        }
        let r = parse_f64(rates, line, "rate", &rec[1])?;
        if !(0.0..=1.0).contains(&r) {
            return Err(CliError::load(rates, Some(line), format!("rate must lie in [0, 1], got {r}")));
        }
        groups.push(rec[0].to_string());
        rate_values.push(r);
    }

    let mut rdr = reader(sizes)?;
    header(&mut rdr, sizes, &["site_id", "group", "count"])?;
    let mut sites: Vec<String> = site_order.map(<[String]>::to_vec).unwrap_or_default();
    let fixed = site_order.is_some();
    let mut entries = Vec::new();
    for (line, rec) in records(&mut rdr, sizes)? {
        let g = groups
            .iter()
            .position(|g| g == &rec[1])
            .ok_or_else(|| CliError::load(sizes, Some(line), format!("group {:?} has no rate", &rec[1])))?;
        let count = parse_f64(sizes, line, "count", &rec[2])?;
        if count < 0.0 {
            return Err(CliError::load(sizes, Some(line), format!("count must be nonnegative, got {count}")));
        }
        let k = match sites.iter().position(|s| s == &rec[0]) {
            Some(k) => k,
            None if fixed => {
                return Err(CliError::load(sizes, Some(line), format!("unknown site_id {:?}", &rec[0])));
            }
            None => {
                sites.push(rec[0].to_string());
                sites.len() - 1
            }
        };
        entries.push((line, k, g, count));
    }
    let ng = groups.len();
    let mut counts = vec![0.0; sites.len() * ng];
    let mut seen = vec![false; sites.len() * ng];
    for (line, k, g, count) in entries {
        if std::mem::replace(&mut seen[k * ng + g], true) {
            return Err(CliError::load(sizes, Some(line), "duplicate (site_id, group) entry"));
        }
        counts[k * ng + g] = count;
    }
    Ok(ListSizeTable::new(sites, groups, counts, rate_values)?)
}

/// Triplet dump `row,col,weight` (site ids), row-major in taper order.
pub fn write_weights(path: &Path, weights: &SparseWeights, frame: &SpatialFrame) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &["row", "col", "weight"].map(String::from))?;
    for (k, j, v) in weights.triplets() {
        write_row(
            &mut w,
            path,
            &[frame.location(k).site_id.clone(), frame.location(j).site_id.clone(), v.to_string()],
        )?;
    }
    finish(w, path)
}

/// Writes `key=value` lines in the given order.
pub fn write_key_values(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses `key=value` text. Blank lines and lines starting with `#` are
/// ignored; whitespace around keys and values is trimmed; repeated keys are
/// an error.
pub fn parse_key_values(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::load(origin, Some(i as u64 + 1), format!("expected key=value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::load(origin, Some(i as u64 + 1), "empty key"));
        }
        if out.iter().any(|(e, _)| e == k) {
            return Err(CliError::load(origin, Some(i as u64 + 1), format!("repeated key {k:?}")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_key_values(&text, path)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
