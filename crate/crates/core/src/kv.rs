//! Line-oriented `key = value` documents with dotted keys.
//!
//! ```text
//! # comment
//! search.scheme = build_up
//! train.decay_epochs = 20, 30
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Keys are
//! dot-separated segments of `[A-Za-z0-9_-]`; values run to the end of the
//! line with surrounding whitespace trimmed. Duplicate keys are errors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        })
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(Error::Config(format!("line {}: invalid key `{key}`", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical text: one `key = value` line per entry, keys sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# header\n\n  search.scheme =  build_up \ntrain.lr=0.1\n").unwrap();
        assert_eq!(kv.get("search.scheme"), Some("build_up"));
        assert_eq!(kv.get("train.lr"), Some("0.1"));
        assert_eq!(kv.get("missing"), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(KeyValues::parse("no equals sign").is_err());
        assert!(KeyValues::parse("a..b = 1").is_err());
        assert!(KeyValues::parse(" = 1").is_err());
        assert!(KeyValues::parse("a b = 1").is_err());
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn values_may_contain_equals() {
        let kv = KeyValues::parse("pool.path = /tmp/a=b.csv").unwrap();
        assert_eq!(kv.get("pool.path"), Some("/tmp/a=b.csv"));
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(
            entries in proptest::collection::btree_map("[a-z][a-z0-9_]{0,6}(\\.[a-z0-9_]{1,6}){0,2}", "[ -~&&[^#]]{0,12}", 0..8)
        ) {
            let mut kv = KeyValues::default();
            for (k, v) in &entries {
                kv.insert(k.clone(), v.trim().to_string());
            }
            let back = KeyValues::parse(&kv.to_text()).unwrap();
            prop_assert_eq!(back, kv);
        }
    }
}
