//! Flat `key = value` configuration with optional `[command]` sections.
//!
//! Keys before the first section apply to every command; a section named
//! after the running command overrides them; command-line flags override
//! both. Other sections are ignored. Lines starting with `#` or `;` are
//! comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    value: String,
    line: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    global: BTreeMap<String, Entry>,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = ConfigFile::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| valid_key(n))
                    .ok_or_else(|| CliError::config_at(line_no, format!("malformed section header '{line}'")))?;
                cfg.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config_at(line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                return Err(CliError::config_at(line_no, format!("invalid key '{key}'")));
            }
            if value.is_empty() {
                return Err(CliError::config_at(line_no, format!("empty value for '{key}'")));
            }
            let table = match &current {
                Some(s) => cfg.sections.get_mut(s).expect("section registered"),
                None => &mut cfg.global,
            };
            let entry = Entry {
                value: value.to_string(),
                line: Some(line_no),
            };
            if let Some(prev) = table.insert(key.to_string(), entry) {
                return Err(CliError::config_at(
                    line_no,
                    format!("duplicate key '{key}' (first set on line {})", prev.line.unwrap_or(0)),
                ));
            }
        }
        Ok(cfg)
    }

    pub fn read(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Effective parameters for `command`: globals, then its section.
    pub fn params_for(&self, command: &str) -> Params {
        let mut values = self.global.clone();
        if let Some(section) = self.sections.get(command) {
            for (k, v) in section {
                values.insert(k.clone(), v.clone());
            }
        }
        Params {
            command: command.to_string(),
            values,
        }
    }
}

/// Resolved key/value set for one command run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    command: String,
    values: BTreeMap<String, Entry>,
}

impl Params {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            values: BTreeMap::new(),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Command-line override; has no line number.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                line: None,
            },
        );
    }

    /// Drops a key; used for runtime-only settings kept out of the hash.
    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.values.remove(key).map(|e| e.value)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for (k, e) in &self.values {
            if !allowed.contains(&k.as_str()) {
                return Err(self.err(e.line, format!("unknown key '{k}' for command '{}'", self.command)));
            }
        }
        Ok(())
    }

    fn err(&self, line: Option<usize>, msg: String) -> CliError {
        match line {
            Some(l) => CliError::config_at(l, msg),
            None => CliError::Config(msg),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|e| e.value.as_str())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        let Some(e) = self.values.get(key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(Some)
            .map_err(|_| self.err(e.line, format!("cannot parse '{}' for key '{key}'", e.value)))
    }

    pub fn f64_opt(&self, key: &str) -> CliResult<Option<f64>> {
        let v: Option<f64> = self.parsed(key)?;
        if let Some(x) = v {
            if !x.is_finite() {
                let line = self.values[key].line;
                return Err(self.err(line, format!("key '{key}' must be finite")));
            }
        }
        Ok(v)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn positive_f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.f64_or(key, default)?;
        if v <= 0.0 {
            let line = self.values.get(key).and_then(|e| e.line);
            return Err(self.err(line, format!("key '{key}' must be positive")));
        }
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated finite reals.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        let Some(e) = self.values.get(key) else {
            return Ok(default.to_vec());
        };
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(e.line, format!("cannot parse list entry '{}' for key '{key}'", s.trim())))
            })
            .collect()
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        let Some(e) = self.values.get(key) else {
            return Ok(default.to_vec());
        };
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| self.err(e.line, format!("cannot parse list entry '{}' for key '{key}'", s.trim())))
            })
            .collect()
    }

    pub fn str_list_or(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(key) {
            Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            None => default.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// `command=<name>` followed by the sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        let mut out = format!("command={}\n", self.command);
        for (k, e) in &self.values {
            let _ = writeln!(out, "{k}={}", e.value);
        }
        out
    }

    /// Lowercase hex SHA-256 of [`Params::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, e)| (k.as_str(), e.value.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_globals() {
        let cfg = ConfigFile::parse("n = 10\nseed=1\n[estimate]\nn = 20\n[oracle]\nm = 4\n").unwrap();
        let p = cfg.params_for("estimate");
        assert_eq!(p.usize_or("n", 0).unwrap(), 20);
        assert_eq!(p.u64_or("seed", 0).unwrap(), 1);
        assert!(!p.contains("m"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ConfigFile::parse("n = 1\n\nbogus line\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ConfigFile::parse("n = 1\nn = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let p = ConfigFile::parse("# c\nn = abc\n").unwrap().params_for("x");
        let err = p.usize_or("n", 1).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = ConfigFile::parse("b=2\na=1\n").unwrap().params_for("estimate");
        let b = ConfigFile::parse("a=1\nb=2\n").unwrap().params_for("estimate");
        assert_eq!(a.canonical(), "command=estimate\na=1\nb=2\n");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn lists_and_unknown_keys() {
        let p = ConfigFile::parse("grid = 0.1, 1,10\nzzz = 1\n").unwrap().params_for("x");
        assert_eq!(p.f64_list_or("grid", &[]).unwrap(), vec![0.1, 1.0, 10.0]);
        assert!(p.check_keys(&["grid"]).unwrap_err().to_string().contains("line 2"));
    }
}
