//! Per-run manifests: every artifact directory gets exactly one, written
//! atomically at the end of a successful run.

use kge_core::{Error, Result};
use std::path::Path;
use std::time::Instant;

pub struct RunManifest {
    command: String,
    entries: Vec<(String, String)>,
    started: Instant,
    deterministic: bool,
}

pub fn fnv_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl RunManifest {
    pub fn new(command: &str, deterministic: bool) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            entries: Vec::new(),
            started: Instant::now(),
            deterministic,
        }
    }

    pub fn field(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn config_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display(), e))?;
        self.field("config", path.display());
        self.field("config_hash", format!("{:016x}", fnv_bytes(&bytes)));
        Ok(())
    }

    /// Write `<dir>/manifest.txt` via a temp file + rename.
    pub fn write(self, dir: &Path) -> Result<()> {
        let mut text = format!(
            "command = {}\nengine_version = {}\n",
            self.command,
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        // Wall-clock would break byte-level reproducibility of reruns.
        if self.deterministic {
            text.push_str("wall_clock_seconds = -\n");
        } else {
            text.push_str(&format!(
                "wall_clock_seconds = {:.3}\n",
                self.started.elapsed().as_secs_f64()
            ));
        }
        let tmp = dir.join("manifest.txt.tmp");
        let path = dir.join("manifest.txt");
        std::fs::write(&tmp, text).map_err(|e| Error::io(tmp.display(), e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(path.display(), e))
    }
}
