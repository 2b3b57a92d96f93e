//! Plain-text `key=value` configuration files.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Keys may repeat (scene features use this); whitespace around keys and
//! values is trimmed.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| Error::Config {
            line: self.line,
            reason: format!("cannot parse value {:?} for key {:?}", self.value, self.key),
        })
    }

    /// Comma-separated list of exactly `n` floats.
    pub fn floats(&self, n: usize) -> Result<Vec<f64>> {
        let parts: Vec<&str> = self.value.split(',').map(str::trim).collect();
        if parts.len() != n {
            return Err(Error::Config {
                line: self.line,
                reason: format!(
                    "{} expects {n} comma-separated numbers, found {}",
                    self.key,
                    parts.len()
                ),
            });
        }
        parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config {
                        line: self.line,
                        reason: format!("{:?} is not a finite number in {}", p, self.key),
                    })
            })
            .collect()
    }
}

pub fn parse_str(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            reason: format!("expected key=value, found {line:?}"),
        })?;
        entries.push(Entry {
            line: i + 1,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

pub fn parse_file(path: impl AsRef<Path>) -> Result<Vec<Entry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text)
}

/// Last value given for `key`, if any.
pub fn last<'a>(entries: &'a [Entry], key: &str) -> Option<&'a Entry> {
    entries.iter().rev().find(|e| e.key == key)
}
