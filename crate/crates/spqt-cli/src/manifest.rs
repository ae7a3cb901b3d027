//! Run manifests: every command that writes outputs drops a manifest next
//! to them recording the exact command line, a hash of the fully-resolved
//! configuration, the tool version, the seed, and the output paths.
//! Re-running the recorded command reproduces the outputs byte-exactly.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use spqt_core::error::{Error, Result};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub cmd: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(resolved_config_json: &str, seed: u64, outputs: &[&Path]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(resolved_config_json.as_bytes());
        let cmd = std::env::args().collect::<Vec<_>>().join(" ");
        Self {
            cmd,
            config_sha256: hex::encode(hasher.finalize()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            outputs: outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        }
    }

    /// Writes the manifest as `<primary output>.manifest.json`, or
    /// `manifest.json` inside a directory target.
    pub fn write_for(&self, primary: &Path) -> Result<PathBuf> {
        let path = if primary.is_dir() {
            primary.join("manifest.json")
        } else {
            let mut name = primary
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "output".into());
            name.push_str(".manifest.json");
            primary.with_file_name(name)
        };
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
