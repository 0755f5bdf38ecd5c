//! The stats sidecar written by `prep` and required by `train`.
//!
//! Carries the degree normalizer and vocabulary sizes, plus a checksum over
//! the split files so training can refuse to run against data that changed
//! after preparation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DeltaMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsSidecar {
    pub delta: f64,
    pub delta_mode: DeltaMode,
    pub max_degree: usize,
    pub computed_over: usize,
    pub vocab_atoms: usize,
    pub vocab_bonds: usize,
    pub n_max_observed: usize,
    /// Record counts of (train, validation, test).
    pub counts: [usize; 3],
    pub seed: u64,
    pub fractions: [f64; 3],
    /// FNV-1a over the concatenated bytes of train/val/test files.
    pub checksum: String,
}

fn fnv1a64(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(0x0000_0100_0000_01b3);
    }
    state
}

pub fn checksum_of_files(paths: &[PathBuf]) -> Result<String> {
    let mut state = 0xcbf2_9ce4_8422_2325u64;
    for p in paths {
        let bytes = std::fs::read(p)?;
        state = fnv1a64(&bytes, state);
    }
    Ok(format!("{state:016x}"))
}

impl StatsSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).map_err(|e| Error::contract(e.to_string()))?;
        std::fs::write(path, body + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body)
            .map_err(|e| Error::Config(format!("sidecar {}: {e}", path.display())))
    }

    /// Recompute the checksum over the split files in `dir` and compare.
    pub fn verify_fresh(&self, dir: &Path) -> Result<()> {
        let files: Vec<PathBuf> = ["train.jsonl", "val.jsonl", "test.jsonl"]
            .iter()
            .map(|f| dir.join(f))
            .collect();
        for f in &files {
            if !f.exists() {
                return Err(Error::Config(format!("missing split file {}", f.display())));
            }
        }
        let now = checksum_of_files(&files)?;
        if now != self.checksum {
            return Err(Error::Config(format!(
                "stale stats sidecar: checksum {now} does not match recorded {}; re-run prep",
                self.checksum
            )));
        }
        Ok(())
    }
}

/// Locate the single `*.stats.json` in a prepared data directory.
pub fn find_sidecar(dir: &Path) -> Result<PathBuf> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".stats.json"))
        {
            found.push(path);
        }
    }
    match found.len() {
        0 => Err(Error::Config(format!(
            "no stats sidecar (*.stats.json) in {}; run prep first",
            dir.display()
        ))),
        1 => Ok(found.pop().expect("len checked")),
        _ => Err(Error::Config(format!(
            "multiple stats sidecars in {}",
            dir.display()
        ))),
    }
}
