//! Flat `key=value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};
use crate::io::read_key_values;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Assess,
    Correlations,
    Summarize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Assess => "assess",
            Command::Correlations => "correlations",
            Command::Summarize => "summarize",
        }
    }

    /// Keys accepted by this command.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Simulate => &[
                "out", "seed", "sites", "times", "m", "beta", "gamma", "tau2", "truth", "alpha", "offset",
                "psi_file", "side", "e_min", "e_max", "e_time_constant", "latent",
            ],
            Command::Fit => &[
                "out", "seed", "observations", "locations", "model", "m", "n_burnin", "n_keep", "thin",
                "n_chains", "standardize", "alpha_lo", "alpha_hi", "beta_var", "tau2_a", "tau2_b",
                "adapt_interval", "store_psi", "store_loglik",
            ],
            Command::Assess | Command::Correlations | Command::Summarize => &["out", "fit_dir"],
        }
    }

    /// The key that `--model` sets for this command.
    fn model_key(self) -> &'static str {
        match self {
            Command::Simulate => "truth",
            _ => "model",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values given on the command line. They take precedence over `set`
/// entries, which take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub model: Option<String>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `key=value` pairs.
    pub set: Vec<String>,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    /// Directory that relative paths in `value` are resolved against.
    base: PathBuf,
}

/// Validated configuration of one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    entries: BTreeMap<String, Entry>,
}

impl RunConfig {
    /// Merges the config file and overrides, rejecting keys the command
    /// does not know.
    pub fn resolve(command: Command, ov: &Overrides) -> Result<Self> {
        let cwd = PathBuf::from(".");
        let mut entries = BTreeMap::new();
        if let Some(path) = &ov.config {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| cwd.clone());
            let base = if base.as_os_str().is_empty() { cwd.clone() } else { base };
            for (k, v) in read_key_values(path)? {
                entries.insert(k, Entry { value: v, base: base.clone() });
            }
        }
        for s in &ov.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
            entries.insert(k.trim().to_string(), Entry { value: v.trim().to_string(), base: cwd.clone() });
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                entries.insert(k.to_string(), Entry { value: v, base: cwd.clone() });
            }
        };
        flag(command.model_key(), ov.model.clone());
        flag("m", ov.m.map(|v| v.to_string()));
        flag("seed", ov.seed.map(|v| v.to_string()));
        flag("out", ov.out.as_ref().map(|p| p.display().to_string()));

        let allowed = command.keys();
        if let Some(bad) = entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(CliError::Config(format!(
                "unknown key {bad:?} for {command} (accepted: {})",
                allowed.join(", ")
            )));
        }
        Ok(Self { command, entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("bad value for {key}: {v:?}"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.parse(key, default)
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        self.parse(key, default)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse(key, default)?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("{key} must be finite")));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Config(format!("bad value for {key}: {v:?} (use true or false)"))),
        }
    }

    pub fn string<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| CliError::Config(format!("bad number in {key}: {x:?}")))
                })
                .collect(),
        }
    }

    /// A path resolved against the directory of the file that set it.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|e| {
            let p = PathBuf::from(&e.value);
            if p.is_absolute() {
                p
            } else {
                e.base.join(p)
            }
        })
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("{} requires {key}", self.command)))
    }
}
