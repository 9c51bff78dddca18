//! `key = value` configuration files. Blank lines and `#` comments are
//! skipped; keys use the long flag names with `-` or `_`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
            let key = key.trim().replace('-', "_");
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key {key}", no + 1));
            }
        }
        Ok(Self { entries })
    }

    /// Remove and parse `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key} = {v:?}: {e}"))),
        }
    }

    /// Fill `slot` from `key` unless a flag already set it.
    pub fn fill<T: FromStr>(&mut self, key: &str, slot: &mut Option<T>) -> Result<(), CliError>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.take(key)?;
        if slot.is_none() {
            *slot = value;
        }
        Ok(())
    }

    /// Error on keys nobody consumed.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Usage(format!("unknown config key {k}"))),
        }
    }
}
