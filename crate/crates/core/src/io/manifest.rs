//! Run manifests: every command writes a manifest listing the files it
//! produced with their content hashes, so identical configurations can be
//! verified to reproduce identical outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// Hash of the effective configuration the command ran with.
    pub config_hash: String,
    /// Informational only; excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
    pub files: Vec<ManifestFile>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&std::fs::read(path)?))
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash,
            wall_clock_seconds: 0.0,
            files: Vec::new(),
        }
    }

    /// Hashes `root/rel` and records it under its relative path.
    pub fn add_file(&mut self, root: &Path, rel: &str) -> Result<()> {
        let sha256 = sha256_file(&root.join(rel))?;
        self.files.push(ManifestFile {
            path: rel.to_string(),
            sha256,
        });
        Ok(())
    }

    /// Manifest filename of a command in an output directory.
    pub fn path_for(root: &Path, command: &str) -> PathBuf {
        root.join(format!("{command}.manifest.json"))
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = Manifest::path_for(root, &self.command);
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(root: &Path, command: &str) -> Result<Manifest> {
        Ok(serde_json::from_slice(&std::fs::read(Manifest::path_for(
            root, command,
        ))?)?)
    }

    /// True when both manifests list the same files with the same hashes;
    /// wall clock is ignored.
    pub fn same_outputs(&self, other: &Manifest) -> bool {
        self.files == other.files && self.config_hash == other.config_hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn manifests_track_file_contents() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), b"hello").unwrap();
        let mut m1 = Manifest::new("test", 1, "cfg".into());
        m1.add_file(dir.path(), "a.txt").unwrap();
        m1.wall_clock_seconds = 1.0;
        let mut m2 = Manifest::new("test", 1, "cfg".into());
        m2.add_file(dir.path(), "a.txt").unwrap();
        m2.wall_clock_seconds = 99.0;
        assert!(m1.same_outputs(&m2));

        std::fs::write(dir.path().join("a.txt"), b"changed").unwrap();
        let mut m3 = Manifest::new("test", 1, "cfg".into());
        m3.add_file(dir.path(), "a.txt").unwrap();
        assert!(!m1.same_outputs(&m3));

        m1.write(dir.path()).unwrap();
        let back = Manifest::read(dir.path(), "test").unwrap();
        assert!(back.same_outputs(&m1));
    }
}
