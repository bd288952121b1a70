//! `key=value` settings from a config file and repeated `--set` flags.

use crate::Fail;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// dashes in keys are read as underscores.
    pub fn parse(text: &str) -> Result<Settings, String> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            s.insert_pair(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings, Fail> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail::usage(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse(&text).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))
    }

    pub fn insert_pair(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(format!("empty key in `{pair}`"));
        }
        self.values.insert(key, v.trim().to_string());
        Ok(())
    }

    /// Overrides `key` with a flag value when the flag was given.
    pub fn set_flag<T: Display>(&mut self, key: &str, flag: Option<T>) {
        if let Some(v) = flag {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Returns `flag` if given, else removes and parses `key`.
    pub fn take<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Fail>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        from_file
            .map(|v| v.parse::<T>().map_err(|e| Fail::usage(format!("{key}: bad value `{v}`: {e}"))))
            .transpose()
    }

    pub fn take_bool(&mut self, key: &str, flag: bool) -> Result<bool, Fail> {
        Ok(self.take(key, flag.then_some(true))?.unwrap_or(false))
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        self.values
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}
