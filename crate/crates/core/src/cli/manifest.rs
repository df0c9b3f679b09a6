//! Run manifests, atomic writes and versioned run directories.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of one CLI invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_sha256: Option<String>,
    pub data_sha256: Option<String>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// Starts a manifest stamped with the current time.
    pub fn begin(command: Vec<String>, seeds: Vec<u64>) -> Self {
        let now = timestamp();
        RunManifest {
            command,
            config_sha256: None,
            data_sha256: None,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: now.clone(),
            finished: now,
            outputs: Vec::new(),
        }
    }

    /// Stamps the end time and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<Self> {
        self.finished = timestamp();
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::Numeric(format!("cannot serialize manifest: {e}")))?;
        write_atomic(path, json.as_bytes())?;
        Ok(self)
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Creates `base/stem-NNN` with the first free number.
pub fn versioned_dir(base: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(base)?;
    for k in 1..100_000 {
        let dir = base.join(format!("{stem}-{k:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Config(format!("no free run directory for {stem} under {}", base.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn run_directories_are_never_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let a = versioned_dir(tmp.path(), "run").unwrap();
        let b = versioned_dir(tmp.path(), "run").unwrap();
        assert_ne!(a, b);
        assert!(a.ends_with("run-001") && b.ends_with("run-002"));
    }

    #[test]
    fn manifests_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("manifest.json");
        let mut m = RunManifest::begin(vec!["fit".into()], vec![7]);
        m.outputs.push("draws.csv".into());
        let written = m.finish(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, written);
        assert!(!tmp.path().join(".manifest.json.tmp").exists());
    }
}
