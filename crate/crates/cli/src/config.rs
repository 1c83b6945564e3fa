//! Flat `key = value` config files and flag/file/default resolution.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; keys and values are trimmed. Keys use the same
//! spelling as the long command-line flags. A flag always overrides the
//! file value, which overrides the built-in default.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ghicast::{Error, Result};

/// Every key any command accepts; anything else is rejected up front.
const KNOWN_KEYS: &[&str] = &[
    "batch",
    "cloud-cover",
    "cloud-speed",
    "clip-norm",
    "data",
    "decoder-steps",
    "delta-quantile",
    "depth",
    "epochs",
    "grid",
    "hidden",
    "hours",
    "jobs",
    "lead",
    "leads",
    "lr",
    "min-leaf",
    "mode",
    "model",
    "neighbors",
    "out",
    "p",
    "p-prime",
    "patience",
    "rounds",
    "seed",
    "shrinkage",
    "start-year",
    "target",
    "test-years",
    "train-years",
    "val-fraction",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    map: HashMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> FileConfig {
        FileConfig::default()
    }

    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    i + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "config line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(FileConfig { map })
    }

    pub fn load_opt(path: &Option<std::path::PathBuf>) -> Result<FileConfig> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::empty()),
        }
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("config key `{key}`: bad value `{raw}`: {e}"))
            }),
        }
    }

    /// Flag value if given, else file value, else the default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(flag.or(self.parse_value(key)?).unwrap_or(default))
    }

    /// Flag value if given, else file value, else None.
    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        Ok(flag.or(self.parse_value(key)?))
    }
}
