//! Run manifests: the resolved configuration, seeds, and file paths that make
//! an output directory reproducible.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// Fully resolved configuration (flag > config file > default).
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Unix seconds; informational, excluded from determinism contracts.
    pub started_at: u64,
    pub finished_at: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, tool_version: &str, config: Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: tool_version.to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = unix_now();
    }

    /// Writes `run_manifest.json` atomically (temp file + rename).
    pub fn write(&self, dir: &Path) -> std::io::Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("run_manifest.json");
        let tmp = dir.join(".run_manifest.json.tmp");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_writes_atomically_and_round_trips() {
        let dir = std::env::temp_dir().join(format!("pastel-manifest-{}", std::process::id()));
        let mut m = RunManifest::new("gen-data", "0.1.0", serde_json::json!({"seed": 7}), vec![7]);
        m.inputs.push("envs/default.toml".into());
        m.outputs.push("dataset.jsonl".into());
        m.finish();
        let path = m.write(&dir).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.subcommand, "gen-data");
        assert_eq!(back.seeds, vec![7]);
        assert!(!dir.join(".run_manifest.json.tmp").exists());
        std::fs::remove_dir_all(&dir).ok();
    }
}
