//! Every file-writing run drops a manifest.json next to its outputs: the
//! exact command, resolved configuration, seeds, input hashes, and wall
//! time. Reruns with the same seed differ only in the timing fields.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// sha256 of each input file, keyed by path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    /// Extra timing breakdowns (model vs cost-model time, etc).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            wall_time_seconds: 0.0,
            timings: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.input_hashes.insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    pub fn timing(&mut self, name: &str, seconds: f64) -> &mut Self {
        self.timings.insert(name.to_string(), seconds);
        self
    }

    /// Records the wall time since `start` and writes manifest.json.
    pub fn write(mut self, out_dir: &Path, start: Instant) -> Result<()> {
        self.wall_time_seconds = start.elapsed().as_secs_f64();
        self.outputs.push(out_dir.join("manifest.json").display().to_string());
        write_json(&out_dir.join("manifest.json"), &self)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing input '{}'", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with a trailing newline; shared by all artifact writers.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing '{}'", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_match_known_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lands_next_to_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new(serde_json::json!({"batch": 64}));
        m.seed("ga", 7);
        m.write(dir.path(), Instant::now()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seeds"]["ga"], 7);
        assert_eq!(v["config"]["batch"], 64);
        assert!(v["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    }
}
