//! Run manifests: a JSON sidecar written next to every artifact,
//! recording the command, resolved configuration, input hashes, seed, tool
//! version, and wall-clock duration. Re-running a command whose manifest
//! matches (everything except the duration) produces byte-identical
//! artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::util::fnv1a64;

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    fnv1a64: String,
}

#[derive(Debug, Serialize)]
struct ManifestBody {
    command: String,
    config: serde_json::Value,
    inputs: Vec<InputHash>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    version: String,
    duration_seconds: f64,
}

/// Collects manifest fields while a command runs.
pub struct RunManifest {
    command: String,
    config: serde_json::Map<String, serde_json::Value>,
    inputs: Vec<InputHash>,
    seed: Option<u64>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: serde_json::Map::new(),
            inputs: Vec::new(),
            seed: None,
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Record an input file and its content hash.
    pub fn input(&mut self, path: &Path) -> std::io::Result<&mut Self> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        });
        Ok(self)
    }

    /// Record already-loaded input content (for inputs assembled from many
    /// files).
    pub fn input_bytes(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        self.inputs.push(InputHash {
            path: label.to_string(),
            fnv1a64: format!("{:016x}", fnv1a64(bytes)),
        });
        self
    }

    /// Write `<artifact>.manifest.json` next to the artifact.
    pub fn write_for(self, artifact: &Path) -> std::io::Result<PathBuf> {
        let body = ManifestBody {
            command: self.command,
            config: serde_json::Value::Object(self.config),
            inputs: self.inputs,
            seed: self.seed,
            version: crate::cli::version_string(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = artifact.with_file_name(name);
        let json = serde_json::to_string_pretty(&body).expect("manifest serializes");
        std::fs::write(&path, json)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lands_next_to_the_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "hello").unwrap();
        let artifact = dir.path().join("out.tsv");

        let mut m = RunManifest::new("mine");
        m.config("max_lines", 6).seed(7);
        m.input(&input).unwrap();
        let path = m.write_for(&artifact).unwrap();
        assert_eq!(path, dir.path().join("out.tsv.manifest.json"));

        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["command"], "mine");
        assert_eq!(parsed["config"]["max_lines"], 6);
        assert_eq!(parsed["seed"], 7);
        assert!(parsed["inputs"][0]["fnv1a64"].is_string());
    }
}
