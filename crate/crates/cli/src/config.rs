//! Flat `key = value` run configuration. Command-line flags take
//! precedence over file entries.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
    origin: String,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("{origin}:{}: expected key = value", k + 1)));
            };
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (value.trim().to_string(), k + 1)).is_some() {
                return Err(CliError::Usage(format!("{origin}:{}: duplicate key '{key}'", k + 1)));
            }
        }
        Ok(Self {
            entries,
            origin: origin.to_string(),
        })
    }

    /// Rejects keys the command does not understand.
    pub fn restrict(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{line}: unknown key '{key}' (expected one of: {})",
                    self.origin,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// The flag value if given, otherwise the parsed file entry.
    pub fn pick<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|e| {
                CliError::Usage(format!("{}:{line}: invalid value for '{key}': {e}", self.origin))
            }),
        }
    }

    pub fn pick_or<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(key, flag)?.unwrap_or(default))
    }
}
