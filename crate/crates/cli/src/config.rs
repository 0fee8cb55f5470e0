//! Plain-text key=value configuration with one nesting level via dotted
//! keys. Unknown keys are rejected so typos in physics parameters cannot
//! silently fall back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use anyhow::{anyhow, bail, Context, Result};

pub struct Config {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got '{line}'", lineno + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if entries.insert(key.clone(), value).is_some() {
                bail!("duplicate config key '{key}'");
            }
        }
        Ok(Config {
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn raw(&self, key: &str) -> Option<String> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).cloned()
    }

    pub fn req_str(&self, key: &str) -> Result<String> {
        self.raw(key)
            .ok_or_else(|| anyhow!("missing required config key '{key}'"))
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        self.raw(key)
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        self.req_str(key)?
            .parse()
            .with_context(|| format!("config key '{key}' is not a number"))
    }

    pub fn opt_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("config key '{key}' is not a number")),
        }
    }

    pub fn opt_f64_nullable(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) if v == "auto" => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .with_context(|| format!("config key '{key}' is not a number")),
        }
    }

    pub fn req_usize(&self, key: &str) -> Result<usize> {
        self.req_str(key)?
            .parse()
            .with_context(|| format!("config key '{key}' is not an integer"))
    }

    pub fn opt_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("config key '{key}' is not an integer")),
        }
    }

    pub fn opt_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("config key '{key}' is not an integer")),
        }
    }

    pub fn req_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.req_str(key)?;
        parse_f64_list(&raw).with_context(|| format!("config key '{key}'"))
    }

    pub fn opt_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(raw) => parse_f64_list(&raw).with_context(|| format!("config key '{key}'")),
        }
    }

    /// Semicolon-separated 3-vectors, e.g. `0,0,0; 0.25,0,0`.
    pub fn opt_vec3_list(&self, key: &str) -> Result<Option<Vec<[f64; 3]>>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for part in raw.split(';') {
            let nums = parse_f64_list(part).with_context(|| format!("config key '{key}'"))?;
            if nums.len() != 3 {
                bail!("config key '{key}': expected 3 components per point, got {}", nums.len());
            }
            out.push([nums[0], nums[1], nums[2]]);
        }
        Ok(Some(out))
    }

    /// Fails if the file contains keys nothing consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            let list: Vec<String> = unknown.iter().map(|k| format!("'{k}'")).collect();
            bail!("unknown config key(s): {}", list.join(", "));
        }
        Ok(())
    }
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number '{}'", p.trim()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let cfg = Config::parse("a.b = 1\n# comment\nlist = 1, 2,3\n").unwrap();
        assert_eq!(cfg.req_f64("a.b").unwrap(), 1.0);
        assert_eq!(cfg.req_f64_list("list").unwrap(), vec![1.0, 2.0, 3.0]);
        cfg.finish().unwrap();

        let cfg = Config::parse("known = 1\nmystery.key = 2\n").unwrap();
        let _ = cfg.req_f64("known");
        let err = cfg.finish().unwrap_err().to_string();
        assert!(err.contains("mystery.key"), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(Config::parse("x = 1\nx = 2\n").is_err());
        assert!(Config::parse("just words\n").is_err());
    }
}
