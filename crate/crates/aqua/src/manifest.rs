//! Corpus manifest: one JSON object per line in `manifest.jsonl`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One corpus sample. Paths are relative to the corpus directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub degraded: String,
    #[serde(default)]
    pub clean: Option<String>,
    /// Reference transmission as 16-bit gray PNG; absent for unlabeled images.
    #[serde(default)]
    pub transmission: Option<String>,
    #[serde(default)]
    pub background: Option<[f64; 3]>,
    #[serde(default)]
    pub beta: Option<[f64; 3]>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn write_manifest(dir: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}: bad record", path.display(), k + 1))
        })
        .collect()
}
