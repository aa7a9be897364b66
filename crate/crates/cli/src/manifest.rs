use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub exit_code: i32,
    /// Resolved configuration as TOML; loads back to the same `RunConfig`.
    pub config: String,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    /// Inventories files already written under `dir`.
    pub fn inventory(dir: &Path, names: &[String]) -> io::Result<Vec<FileEntry>> {
        names
            .iter()
            .map(|name| {
                let bytes = std::fs::read(dir.join(name))?;
                Ok(FileEntry {
                    name: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: digest(&bytes),
                })
            })
            .collect()
    }
}
