//! Flat `key=value` run configuration with precedence
//! defaults < config file < command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys may use `-` or `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!("config line {}: expected key=value", k + 1)));
        };
        let key = key.trim().replace('_', "-");
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError(format!("config line {}: duplicate key `{key}`", k + 1)));
        }
    }
    Ok(out)
}

pub fn read_config(path: Option<&Path>) -> Result<BTreeMap<String, String>, ConfigError> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
            .collect::<Result<Vec<_>, _>>()
            .map(FloatList)
    }
}

impl fmt::Display for FloatList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Merges flags, file entries and defaults, recording every resolved value.
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    /// Resolve an optional setting.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, ConfigError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.used.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse::<T>()
                        .map_err(|e| ConfigError(format!("config key `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, ConfigError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, ConfigError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| ConfigError(format!("missing required setting --{key}")))
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool, ConfigError> {
        let v = if flag { Some(true) } else { self.opt::<bool>(key, None)? };
        let v = v.unwrap_or(false);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Fails on config-file keys that no setting consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>, ConfigError> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(ConfigError(format!("unknown config keys: {}", names.join(", "))));
        }
        Ok(self.resolved)
    }
}
