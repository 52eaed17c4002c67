//! Flat key-value run configuration.
//!
//! Values resolve with CLI flags taking precedence over the config file,
//! which takes precedence over built-in defaults. Every subcommand that
//! produces an output directory writes the fully resolved configuration
//! there for reproducibility.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Marker for operator errors (bad flags, unusable paths); mapped to exit
/// code 2 instead of 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Flat config file: TOML restricted to top-level scalar keys.
pub struct FileConfig {
    values: BTreeMap<String, toml::Value>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig { values: BTreeMap::new() }
    }

    /// Load from `--config`, falling back to the `WORDSPOT_CONFIG`
    /// environment variable.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os("WORDSPOT_CONFIG").map(PathBuf::from),
        };
        let Some(path) = path else { return Ok(Self::empty()) };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| usage(format!("{}: not a flat key-value file: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            if v.is_table() || v.is_array() {
                return Err(usage(format!(
                    "{}: key {k:?} is not a scalar; the run config is flat key-value",
                    path.display()
                )));
            }
            values.insert(k, v);
        }
        Ok(FileConfig { values })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.values.get(key)
    }

    pub fn get<T: FromConfigValue>(&self, key: &str, cli: Option<T>, default: T) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.raw(key) {
            Some(raw) => T::from_value(raw)
                .ok_or_else(|| usage(format!("config key {key:?}: cannot use value {raw}"))),
            None => Ok(default),
        }
    }

    pub fn get_opt<T: FromConfigValue>(&self, key: &str, cli: Option<T>) -> Result<Option<T>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.raw(key) {
            Some(raw) => T::from_value(raw)
                .map(Some)
                .ok_or_else(|| usage(format!("config key {key:?}: cannot use value {raw}"))),
            None => Ok(None),
        }
    }
}

pub trait FromConfigValue: Sized {
    fn from_value(v: &toml::Value) -> Option<Self>;
}

impl FromConfigValue for u64 {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
}

impl FromConfigValue for usize {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
}

impl FromConfigValue for u32 {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_integer().and_then(|i| u32::try_from(i).ok())
    }
}

impl FromConfigValue for f64 {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    }
}

impl FromConfigValue for bool {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_bool()
    }
}

impl FromConfigValue for String {
    fn from_value(v: &toml::Value) -> Option<Self> {
        v.as_str().map(|s| s.to_string())
    }
}

/// Resolved key-value pairs, written next to every produced artifact.
#[derive(Debug, Default)]
pub struct ResolvedConfig {
    entries: Vec<(String, String)>,
}

impl ResolvedConfig {
    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run_config.txt");
        let mut text = String::new();
        for (k, v) in &self.entries {
            let needs_quotes = v.parse::<f64>().is_err() && v != "true" && v != "false";
            if needs_quotes {
                text.push_str(&format!("{k} = \"{v}\"\n"));
            } else {
                text.push_str(&format!("{k} = {v}\n"));
            }
        }
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Create an output directory up front; failure is an operator error.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<wordspot_core::Error>() {
        if matches!(core, wordspot_core::Error::InvalidConfig(_)) {
            return 2;
        }
    }
    1
}
