//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    /// Relative paths in the value resolve against this directory.
    base: PathBuf,
}

/// Parsed configuration. Keys are case-insensitive; `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key = value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if cfg.entries.contains_key(&key) {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
            cfg.insert(&key, value.trim(), base);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, &base)
    }

    fn insert(&mut self, key: &str, value: &str, base: &Path) {
        self.entries.insert(
            key.to_ascii_lowercase(),
            Entry {
                value: value.to_string(),
                base: base.to_path_buf(),
            },
        );
    }

    /// Applies `KEY=VALUE` overrides; their paths resolve against the
    /// working directory.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override '{o}' is not KEY=VALUE")))?;
            self.insert(k.trim(), v.trim(), Path::new(""));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.insert(key, value, Path::new(""));
    }

    /// Rejects keys outside `known`, which catches misspellings.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "unknown config key(s): {} (known: {})",
                unknown.join(", "),
                known.join(", ")
            )))
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn required_str(&self, key: &str) -> Result<&str> {
        self.str(key)
            .ok_or_else(|| CliError::Usage(format!("missing required config key '{key}'")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.str(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    CliError::Usage(format!("config key '{key}': cannot parse '{v}': {e}"))
                })
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.str(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Usage(format!(
                "config key '{key}': expected true/false, got '{v}'"
            ))),
        }
    }

    /// Comma-separated list; absent or empty gives an empty list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|e| e.base.join(&e.value))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Usage(format!("missing required config key '{key}'")))
    }

    /// Comma-separated list of paths.
    pub fn paths(&self, key: &str) -> Vec<PathBuf> {
        match self.entries.get(key) {
            None => Vec::new(),
            Some(e) => self.list(key).iter().map(|p| e.base.join(p)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_paths() {
        let cfg = Config::parse(
            "# run\nfamily = FRN, BINARY\nn_iter=200 # short\n\ndata_dir = data\n",
            Path::new("/tmp/x"),
        )
        .unwrap();
        assert_eq!(cfg.list("family"), vec!["FRN", "BINARY"]);
        assert_eq!(cfg.parse_or("n_iter", 0usize).unwrap(), 200);
        assert_eq!(cfg.path("data_dir").unwrap(), PathBuf::from("/tmp/x/data"));
        assert!(cfg.check_known(&["family", "n_iter"]).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("family FRN", Path::new("")).is_err());
        assert!(Config::parse("a=1\nA=2", Path::new("")).is_err());
        let cfg = Config::parse("n_iter = many", Path::new("")).unwrap();
        assert!(cfg.parse_opt::<usize>("n_iter").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = Config::parse("seed = 1", Path::new("")).unwrap();
        cfg.apply_overrides(&["seed=9".into()]).unwrap();
        assert_eq!(cfg.parse_or("seed", 0u64).unwrap(), 9);
        assert!(cfg.apply_overrides(&["seed".into()]).is_err());
    }
}
