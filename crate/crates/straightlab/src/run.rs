//! Run directories: resolved-config echoes, provenance manifests, and the
//! content hashes that name analysis outputs.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|_| Error::FileMissing(path.to_path_buf()))?;
    Ok(sha256_hex(&bytes))
}

/// First 8 hex characters; used to tag output file names with the
/// checkpoint and config they came from.
pub fn short_hash(hex: &str) -> &str {
    &hex[..8.min(hex.len())]
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub code_version: String,
    pub seed: Option<u64>,
    /// (path, sha256) of every input file the command read.
    pub inputs: Vec<(String, String)>,
    /// Output files the command wrote, relative to the run directory.
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub records: Vec<CommandRecord>,
}

/// A directory holding everything one experiment produced. Append-only:
/// commands add records to the manifest and never rewrite previous outputs
/// with different contents (identical re-runs produce identical bytes).
pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(RunDirectory { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_resolved_config(&self, text: &str) -> Result<()> {
        std::fs::write(self.path("resolved.cfg"), text)?;
        Ok(())
    }

    /// Append a command record to `manifest.json`.
    pub fn record(&self, record: CommandRecord) -> Result<()> {
        let path = self.path("manifest.json");
        let mut manifest: Manifest = if path.exists() {
            serde_json::from_slice(&std::fs::read(&path)?)?
        } else {
            Manifest::default()
        };
        manifest.records.push(record);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_slice(&std::fs::read(&path)?)?)
    }
}

pub fn code_version() -> String {
    format!("straightlab {}", env!("CARGO_PKG_VERSION"))
}
