//! Flat `key = value` configuration with dotted section prefixes.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! consumed by the reader; leftovers are reported as unknown keys.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::FormatError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut kv = KeyValues::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::msg(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.is_empty()
                || !k
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(FormatError::msg(format!(
                    "line {}: invalid key `{k}`",
                    i + 1
                )));
            }
            if kv
                .entries
                .insert(k.to_string(), (v.trim().to_string(), i + 1))
                .is_some()
            {
                return Err(FormatError::msg(format!(
                    "line {}: duplicate key `{k}`",
                    i + 1
                )));
            }
        }
        Ok(kv)
    }

    /// Sets or replaces a key, as command-line overrides do.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn locate(line: usize) -> String {
        if line == 0 {
            "override".into()
        } else {
            format!("line {line}")
        }
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| {
                FormatError::msg(format!(
                    "{}: bad value `{v}` for `{key}`: {e}",
                    Self::locate(line)
                ))
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| FormatError::msg(format!("missing required key `{key}`")))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| {
                        FormatError::msg(format!(
                            "{}: bad item `{s}` in `{key}`: {e}",
                            Self::locate(line)
                        ))
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), FormatError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(FormatError::msg(format!(
                "{}: unknown key `{k}`",
                Self::locate(line)
            ))),
        }
    }
}
