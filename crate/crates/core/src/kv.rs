//! Flat `key=value` text configs.
//!
//! One pair per line, `#` starts a comment, blank lines ignored. Every config
//! surface in this crate (loss parameters, scene specs, run manifests) uses
//! this format so experiments stay diffable and auditable.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parsed pairs. Later duplicates of a key are rejected.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: missing '=' in {raw:?}", lineno + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: cannot parse {raw:?}"))),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get_parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    /// Error if any key is not in `allowed`; typos should not pass silently.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Serialize pairs in the order given; caller controls layout.
pub fn format_kv(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_with_comments() {
        let kv = KvMap::parse("# loss settings\nalpha=0.85\n\n delta = 80\n").unwrap();
        assert_eq!(kv.get("alpha"), Some("0.85"));
        assert_eq!(kv.require::<f64>("delta").unwrap(), 80.0);
    }

    #[test]
    fn rejects_duplicates_and_junk() {
        assert!(KvMap::parse("a=1\na=2").is_err());
        assert!(KvMap::parse("no equals sign").is_err());
        assert!(KvMap::parse("=5").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let kv = KvMap::parse("alpha=0.85\ntypo_key=3").unwrap();
        assert!(kv.check_keys(&["alpha"]).is_err());
        assert!(kv.check_keys(&["alpha", "typo_key"]).is_ok());
    }
}
