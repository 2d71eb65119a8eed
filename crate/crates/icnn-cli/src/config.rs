//! Flat key/value experiment configs: `key = value` lines with `#`
//! comments, CLI-flag overrides on top, and a resolved copy (defaults
//! included) written next to every run's outputs.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed or contradictory config, missing seed. Exit 2.
    Config(String),
    /// Unreadable or malformed data files. Exit 3.
    Data(String),
    /// A check or run failed. Exit 1.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Run(m) => write!(f, "run error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<icnn::data::DataError> for CliError {
    fn from(e: icnn::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<icnn::learn::LearnError> for CliError {
    fn from(e: icnn::learn::LearnError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<icnn::rl::RlError> for CliError {
    fn from(e: icnn::rl::RlError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<icnn::net::NetError> for CliError {
    fn from(e: icnn::net::NetError) -> Self {
        CliError::Run(e.to_string())
    }
}

/// Key/value config with typed accessors. Every read (including defaulted
/// ones) is recorded so the effective configuration can be written out
/// verbatim.
#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn new() -> RunConfig {
        RunConfig::default()
    }

    /// Parses `key = value` lines; blank lines and `#` comments allowed.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", i + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key '{key}'",
                    i + 1
                )));
            }
        }
        Ok(RunConfig {
            values,
            resolved: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Rejects keys outside the command's documented set (fail-fast on
    /// typos before any computation).
    pub fn restrict_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        for key in self.values.keys() {
            if !allowed.contains(key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown config key '{key}' (expected one of: {})",
                    allowed.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(())
    }

    fn record(&self, key: &str, value: &str) {
        self.resolved
            .borrow_mut()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        let v = self
            .values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        v
    }

    pub fn get_opt_str(&self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if let Some(v) = &v {
            self.record(key, v);
        }
        v
    }

    pub fn require_str(&self, key: &str) -> Result<String, CliError> {
        self.values
            .get(key)
            .cloned()
            .inspect(|v| self.record(key, v))
            .ok_or_else(|| CliError::Config(format!("missing required config key '{key}'")))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<T, CliError> {
        raw.parse::<T>()
            .map_err(|_| CliError::Config(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, CliError> {
        let raw = self.get_str(key, &default.to_string());
        self.parse_as(key, &raw)
    }

    pub fn require_u64(&self, key: &str) -> Result<u64, CliError> {
        let raw = self.require_str(key)?;
        self.parse_as(key, &raw)
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let raw = self.get_str(key, &default.to_string());
        self.parse_as(key, &raw)
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let raw = self.get_str(key, &format!("{default}"));
        self.parse_as(key, &raw)
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        let raw = self.get_str(key, if default { "true" } else { "false" });
        match raw.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!(
                "key '{key}': expected a boolean, got '{other}'"
            ))),
        }
    }

    /// Comma-separated positive widths, e.g. "64,32".
    pub fn get_widths(&self, key: &str, default: &str) -> Result<Vec<usize>, CliError> {
        let raw = self.get_str(key, default);
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| {
                        CliError::Config(format!("key '{key}': bad width list '{raw}'"))
                    })
            })
            .collect()
    }

    pub fn get_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let raw = self.require_str(key)?;
        let path = PathBuf::from(&raw);
        if !path.exists() {
            return Err(CliError::Config(format!(
                "key '{key}': path '{raw}' does not exist"
            )));
        }
        Ok(path)
    }

    /// The effective config: every key this run read, with its final value,
    /// one `key = value` line each, sorted.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved.borrow().iter() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
