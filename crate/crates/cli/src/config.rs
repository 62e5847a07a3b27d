//! Key-value configuration files with command-line override.
//!
//! The format is one `key = value` pair per line, `#` starts a comment.
//! Keys use the long flag names; a flag given on the command line always
//! wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::stages::{Stage, StageError};

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, StageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| StageError {
            stage: Stage::Config,
            message: format!("cannot read config file {}: {e}", path.display()),
        })?;
        let mut values = BTreeMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(StageError {
                    stage: Stage::Config,
                    message: format!(
                        "{}:{}: expected `key = value`, found {line:?}",
                        path.display(),
                        line_no + 1
                    ),
                });
            };
            values.insert(normalize(key.trim()), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if present, else config value, else default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, StageError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.lookup(flag, key)? {
            Some(v) => Ok(v),
            None => Ok(default),
        }
    }

    /// Flag value if present, else config value.
    pub fn lookup<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, StageError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| StageError {
                stage: Stage::Config,
                message: format!("config key {key}: cannot parse {raw:?}: {e}"),
            }),
            None => Ok(None),
        }
    }

    /// Boolean switch: a bare flag wins; otherwise the config may enable it.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, StageError> {
        if flag {
            return Ok(true);
        }
        self.resolve(None, key, false)
    }
}

fn normalize(key: &str) -> String {
    key.replace('_', "-")
}
