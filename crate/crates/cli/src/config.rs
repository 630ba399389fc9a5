//! Flat `key = value` configuration with optional `[section]` headers.
//!
//! ```text
//! # comment
//! seed = 3
//!
//! [model_space]
//! ks = 1, 5, 10, inf
//! iters = 50000
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> LabResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| LabError::Config(format!("line {}: unterminated section header", i + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(LabError::Config(format!("line {}: empty key", i + 1)));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(LabError::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    /// Reject keys of `section` not listed in `allowed`.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> LabResult<()> {
        if let Some(map) = self.sections.get(section) {
            for key in map.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(LabError::Config(format!("unknown key [{section}] {key}")));
                }
            }
        }
        Ok(())
    }

    /// Typed value, or `default` when the key is absent.
    pub fn value<T: FromStr>(&self, section: &str, key: &str, default: T) -> LabResult<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| LabError::Config(format!("[{section}] {key}: cannot parse {raw:?}"))),
        }
    }

    /// Comma-separated list, or `default` when the key is absent.
    pub fn list<T: FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> LabResult<Vec<T>> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|item| {
                    item.parse()
                        .map_err(|_| LabError::Config(format!("[{section}] {key}: cannot parse {item:?}")))
                })
                .collect(),
        }
    }
}

/// Ordered `key = value` lines describing the effective settings of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    entries: Vec<(String, String)>,
}

impl Settings {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let c = Config::parse("seed = 4 # root\n\n[a]\nx = 1, 2,3\ny=hello\n[b]\nx = 2.5\n").unwrap();
        assert_eq!(c.get("", "seed"), Some("4"));
        assert_eq!(c.list::<usize>("a", "x", vec![]).unwrap(), vec![1, 2, 3]);
        assert_eq!(c.get("a", "y"), Some("hello"));
        assert_eq!(c.value("b", "x", 0.0).unwrap(), 2.5);
        assert_eq!(c.value("b", "missing", 7usize).unwrap(), 7);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Config::parse("[a\nx=1").is_err());
        assert!(Config::parse("just words").is_err());
        assert!(Config::parse("x = 1\nx = 2").is_err());
        assert!(Config::parse(" = 2").is_err());
        let c = Config::parse("[a]\nx = nope").unwrap();
        assert!(c.value::<f64>("a", "x", 0.0).is_err());
        assert!(c.check_keys("a", &["y"]).is_err());
        assert!(c.check_keys("a", &["x"]).is_ok());
    }
}
