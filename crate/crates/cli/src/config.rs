//! `key = value` run configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

const KNOWN_KEYS: &[&str] = &[
    "data",
    "out",
    "seed",
    "truncation",
    "iters",
    "burn_in",
    "downsample",
    "flow",
    "flow_diffusivity",
    "model",
    "train",
    "bounds",
    "strict",
    "update",
    "cadence",
    "smoothness",
    "flow_iterations",
    "steps",
    "horizons",
    "preset",
    "frames",
    "grid",
    "noise",
    "speed",
    "direction",
    "diffusivity",
    "refine",
    "sources",
    "start",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", n + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("config line {}: unknown key {key}", n + 1)));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// Whitespace-separated pair such as `truncation = 6 6`.
    pub fn get_pair<T: FromStr>(&self, key: &str) -> Result<Option<(T, T)>, CliError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let parts: Vec<&str> = v.split_whitespace().collect();
        let bad = || CliError::Config(format!("config key {key}: expected two values, got {v:?}"));
        if parts.len() != 2 {
            return Err(bad());
        }
        Ok(Some((parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?)))
    }
}

/// Flag value if given, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
