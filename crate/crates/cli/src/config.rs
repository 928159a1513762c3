//! Flat configuration files with dotted keys: one `key = value` per line,
//! `#` comments, later keys override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

#[derive(Clone, Debug, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            if stripped.trim().is_empty() {
                continue;
            }
            let eq = stripped.find('=').ok_or(CliError::Parse {
                line,
                col: stripped.len() + 1,
                message: "expected `key = value`".into(),
            })?;
            let key = stripped[..eq].trim();
            let value = stripped[eq + 1..].trim();
            if key.is_empty() {
                return Err(CliError::Parse {
                    line,
                    col: 1,
                    message: "empty key".into(),
                });
            }
            values.insert(key.to_string(), value.to_string());
        }
        Ok(ConfigMap { values })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Runtime {
            stage: "config-load".into(),
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    /// Override or add a key (used for command-line flag overrides).
    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str, CliError> {
        self.get_str(key)
            .ok_or_else(|| CliError::precondition(key, "missing required key"))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| CliError::precondition(key, format!("not a number: {e}"))),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.get_f64(key)?
            .ok_or_else(|| CliError::precondition(key, "missing required key"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|e| CliError::precondition(key, format!("not a count: {e}"))),
        }
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, CliError> {
        self.get_usize(key)?
            .ok_or_else(|| CliError::precondition(key, "missing required key"))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|e| CliError::precondition(key, format!("not an integer: {e}"))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::precondition(key, format!("bad list entry: {e}")))
                })
                .collect(),
        }
    }

    /// The fully resolved map, embedded in report headers for provenance.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

/// Range guards that name the offending parameter.
pub fn check_positive(key: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::precondition(
            key,
            format!("must be positive, got {value}"),
        ))
    }
}

pub fn check_nonnegative(key: &str, value: f64) -> Result<f64, CliError> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(CliError::precondition(
            key,
            format!("must be >= 0, got {value}"),
        ))
    }
}

pub fn check_unit_open(key: &str, value: f64) -> Result<f64, CliError> {
    if 0.0 < value && value < 1.0 {
        Ok(value)
    } else {
        Err(CliError::precondition(
            key,
            format!("must lie in (0, 1), got {value}"),
        ))
    }
}

pub fn check_min_count(key: &str, value: usize, min: usize) -> Result<usize, CliError> {
    if value >= min {
        Ok(value)
    } else {
        Err(CliError::precondition(
            key,
            format!("must be >= {min}, got {value}"),
        ))
    }
}
