//! Flat `key = value` text files used for parameters and CLI configs.
//!
//! Blank lines and `#` comments are ignored. Keys may carry a noise-level
//! qualifier, `lambda@50 = 12.5`, which overrides `lambda` for that level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    origin: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn new(origin: impl Into<String>) -> Self {
        Self {
            origin: origin.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.display().to_string())
    }

    pub fn parse(text: &str, origin: impl Into<String>) -> Result<Self> {
        let mut file = Self::new(origin);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(file.error(n + 1, format!("expected `key = value`, found {line:?}")));
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || "_@.".contains(c)) {
                return Err(file.error(n + 1, format!("invalid key {key:?}")));
            }
            if file.entries.insert(key.clone(), (n + 1, value)).is_some() {
                return Err(file.error(n + 1, format!("duplicate key {key:?}")));
            }
        }
        Ok(file)
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Config {
            path: format!("{}:{line}", self.origin),
            message,
        }
    }

    /// Errors on the first key whose base name (before `@`) is not allowed.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            let base = key.split('@').next().unwrap_or(key);
            if !allowed.contains(&base) {
                return Err(self.error(*line, format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Looks up `key@<level>` first, then `key`.
    pub fn get_str_at(&self, key: &str, level: Option<f64>) -> Option<&str> {
        level
            .and_then(|s| self.get_str(&format!("{key}@{}", fmt_level(s))))
            .or_else(|| self.get_str(key))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get_f64_at(key, None)
    }

    pub fn get_f64_at(&self, key: &str, level: Option<f64>) -> Result<Option<f64>> {
        let Some(text) = self.get_str_at(key, level) else {
            return Ok(None);
        };
        text.parse::<f64>()
            .map(Some)
            .map_err(|_| self.value_error(key, text, "a number"))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        let Some(text) = self.get_str(key) else {
            return Ok(None);
        };
        text.parse::<usize>()
            .map(Some)
            .map_err(|_| self.value_error(key, text, "a non-negative integer"))
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get_list_at(key, None)
    }

    pub fn get_list_at(&self, key: &str, level: Option<f64>) -> Result<Option<Vec<f64>>> {
        let Some(text) = self.get_str_at(key, level) else {
            return Ok(None);
        };
        text.split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| self.value_error(key, text, "a comma-separated list of numbers"))
    }

    fn value_error(&self, key: &str, text: &str, expected: &str) -> Error {
        let line = self.entries.get(key).map_or(0, |(l, _)| *l);
        self.error(line, format!("value of {key:?} is {text:?}, expected {expected}"))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let line = self.entries.len() + 1;
        self.entries.insert(key.into(), (line, value.into()));
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// `(key, value)` pairs in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn set_list(&mut self, key: impl Into<String>, values: &[f64]) {
        let text: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.set(key, text.join(","));
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl std::fmt::Display for KvFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut out = String::new();
        for (key, (_, value)) in &self.entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        f.write_str(&out)
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Noise levels used as key qualifiers: integers print without a fraction.
pub fn fmt_level(s: f64) -> String {
    if s.fract() == 0.0 && s.abs() < 1e15 {
        format!("{}", s as i64)
    } else {
        fmt_f64(s)
    }
}
