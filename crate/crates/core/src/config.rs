//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! seed = 7
//! [gan]
//! epochs = 3          # read back as "gan.epochs"
//! sgns.window = 2     # explicit prefixes work too
//! ```
//!
//! Inside a `[section]` block every key is prefixed with `section.`; `[]`
//! returns to the top level. Later assignments override earlier ones.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    read: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::format(i + 1, "unterminated section header"))?
                    .trim();
                if name.contains(char::is_whitespace) {
                    return Err(Error::format(i + 1, "section names cannot contain spaces"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(i + 1, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::format(i + 1, format!("invalid key '{key}'")));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.values.insert(full, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.read.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::InvalidConfig(format!("{key} = '{v}': {e}"))),
        }
    }

    /// Parses `key` into `slot` if present; leaves `slot` alone otherwise.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|e| Error::InvalidConfig(format!("{key}: '{s}': {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Keys that were set but never looked up, usually typos.
    pub fn unused_keys(&self) -> Vec<String> {
        let read = self.read.borrow();
        self.values
            .keys()
            .filter(|k| !read.contains(*k))
            .cloned()
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let cfg = Config::parse("seed = 7\n[gan]\nepochs = 3 # short\n\n[]\nout = x y\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<usize>("gan.epochs").unwrap(), Some(3));
        assert_eq!(cfg.get_str("out"), Some("x y"));
        assert!(cfg.unused_keys().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Config::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains('2'));
        assert!(Config::parse("[open\n").is_err());
        let cfg = Config::parse("n = abc").unwrap();
        assert!(cfg.get::<usize>("n").is_err());
    }

    #[test]
    fn later_values_and_overrides_win() {
        let mut cfg = Config::parse("k = 1\nk = 2\nlist = 1, 2,3\n").unwrap();
        assert_eq!(cfg.get::<i32>("k").unwrap(), Some(2));
        cfg.set("k", "5");
        let mut slot = 0;
        cfg.apply("k", &mut slot).unwrap();
        assert_eq!(slot, 5);
        assert_eq!(cfg.get_list::<u8>("list").unwrap(), Some(vec![1, 2, 3]));
        cfg.set("typo", "1");
        assert_eq!(cfg.unused_keys(), vec!["typo".to_string()]);
    }
}
