use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of one invocation, written as `manifest.json` next to its outputs.
/// Timestamps live here only, so every other output is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the command, options and config.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn config_hash(value: &serde_json::Value) -> String {
    // serde_json maps are ordered by key, so this serialization is canonical
    let bytes = serde_json::to_vec(value).expect("JSON values serialize");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Sorted names of the regular files in `dir`, excluding the manifest.
pub fn list_outputs(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name != "manifest.json" {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}
