//! Flat key-value settings: an optional INI file overlaid by command-line
//! flags of the same name (`batch_size` in the file, `--batch-size` on the
//! command line).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use ini::Ini;

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Settings {
    /// Reads every key of the INI file. Keys may sit in the general
    /// section or in named sections; section names are ignored.
    pub fn from_ini_file(path: &Path) -> Result<Settings> {
        if !path.exists() {
            return Err(UsageError(format!("config file {} does not exist", path.display())).into());
        }
        let ini = Ini::load_from_file(path).map_err(|e| UsageError(format!("config file {}: {e}", path.display())))?;
        let mut s = Settings::default();
        for (_, props) in ini.iter() {
            for (k, v) in props.iter() {
                s.set(k, v);
            }
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!(UsageError(format!("setting `{key}` = {v:?}: {e}"))))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| {
            UsageError(format!(
                "missing required setting `{key}` (flag --{})",
                key.replace('_', "-")
            ))
            .into()
        })
    }

    /// Boolean switches accept `true/false`, `yes/no`, `1/0`, `on/off`.
    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key).map(|v| v.trim().to_ascii_lowercase()) {
            None => Ok(false),
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(UsageError(format!("setting `{key}` = {v:?} is not a boolean")).into()),
            },
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// A path that must already exist on disk.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf> {
        let p: PathBuf = self.require(key)?;
        if !p.exists() {
            return Err(UsageError(format!("{key}: {} does not exist", p.display())).into());
        }
        Ok(p)
    }

    /// All settings in key order, one `key = value` line each.
    pub fn to_ini_string(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ini_string()).with_context(|| format!("writing {}", path.display()))
    }
}
