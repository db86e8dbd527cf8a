//! Flat `key = value` configuration files.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored.
//! Duplicate keys are an error.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Parsed pairs, consumed key by key so leftovers can be reported as unknown.
#[derive(Debug, Default, Clone)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }
        Ok(KvMap { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    /// Removes and parses `key`, if present.
    pub fn take<V: FromStr>(&mut self, key: &str) -> Result<Option<V>, KvError>
    where
        V::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => {
                raw.parse().map(Some).map_err(|e: V::Err| KvError::Invalid { key: key.to_string(), message: format!("`{raw}`: {e}") })
            }
        }
    }

    pub fn take_or<V: FromStr>(&mut self, key: &str, default: V) -> Result<V, KvError>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<(), KvError> {
        match self.entries.into_keys().next() {
            Some(k) => Err(KvError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}
