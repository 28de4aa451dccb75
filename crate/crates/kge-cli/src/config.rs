//! Line-based `key = value` config files.
//!
//! `#` starts a comment, keys may repeat (entities, edges), later scalar
//! occurrences win. Every key must be consumed by the command reading the
//! file; leftovers fail the run naming the offending key and line.

use kge_core::{Error, Result};
use std::path::Path;
use std::str::FromStr;

pub struct ConfigFile {
    path: String,
    entries: Vec<(String, String, usize)>,
    used: Vec<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<ConfigFile> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: lineno + 1,
                    msg: "expected `key = value`".into(),
                });
            };
            entries.push((key.trim().to_string(), value.trim().to_string(), lineno + 1));
        }
        let used = vec![false; entries.len()];
        Ok(ConfigFile {
            path: path.to_string(),
            entries,
            used,
        })
    }

    /// Last occurrence of `key`, marking all occurrences consumed.
    pub fn get(&mut self, key: &str) -> Option<String> {
        let mut found = None;
        for (i, (k, v, _)) in self.entries.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                found = Some(v.clone());
            }
        }
        found
    }

    /// Every occurrence of `key`, in file order.
    pub fn get_all(&mut self, key: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, (k, v, _)) in self.entries.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                out.push(v.clone());
            }
        }
        out
    }

    /// Parse `key` as `T`, falling back to `default` when absent.
    pub fn parse_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Config(format!(
                    "{}: key `{key}` has unparseable value `{v}`",
                    self.path
                ))
            }),
        }
    }

    pub fn require(&mut self, key: &str) -> Result<String> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.path)))
    }

    /// Fail on the first key no reader asked for.
    pub fn finish(self) -> Result<()> {
        for ((key, _, line), used) in self.entries.iter().zip(&self.used) {
            if !used {
                return Err(Error::Config(format!(
                    "{}:{line}: unknown config key `{key}`",
                    self.path
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_repeats() {
        let mut cfg = ConfigFile::parse("a = 1 # trailing\n# full\nb = x\nb = y\n", "t").unwrap();
        assert_eq!(cfg.parse_or("a", 0u32).unwrap(), 1);
        assert_eq!(cfg.get_all("b"), vec!["x", "y"]);
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let cfg = ConfigFile::parse("mystery = 1\n", "t").unwrap();
        let err = cfg.finish().unwrap_err();
        assert!(err.to_string().contains("`mystery`"), "{err}");
        assert!(err.to_string().contains("t:1"), "{err}");
    }

    #[test]
    fn bad_value_is_named() {
        let mut cfg = ConfigFile::parse("dim = soon\n", "t").unwrap();
        let err = cfg.parse_or("dim", 4usize).unwrap_err();
        assert!(err.to_string().contains("`dim`"), "{err}");
    }
}
