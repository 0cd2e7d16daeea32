//! Run manifests: every CLI invocation records what it read, what it
//! wrote, and enough of its configuration (the full argv) to replay the
//! run byte-identically. All outputs, including the manifest itself, are
//! written atomically via temp file + rename.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Full argument vector (excluding the binary name); replaying these
    /// arguments reproduces the outputs for deterministic subcommands.
    pub argv: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Subcommand-specific configuration snapshot.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            argv,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: serde_json::Value::Null,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: Utc::now(),
            wall_time_s: 0.0,
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.outputs.push(path.into());
        self
    }

    /// Write `<dir>/manifest.json` atomically.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let data = fs::read_to_string(path)?;
        serde_json::from_str(&data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Write via a sibling temp file and rename, so readers never observe a
/// partial file and interrupted runs never leave a truncated output.
pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("identify", vec!["identify".into(), "--maps".into(), "d".into()]);
        m.input("maps");
        m.output("out.csv");
        m.seed = Some(7);
        m.config = serde_json::json!({"min_elevation": 25.0});
        m.wall_time_s = 1.25;
        let path = m.write(dir.path()).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back.subcommand, "identify");
        assert_eq!(back.argv, m.argv);
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.outputs, vec![PathBuf::from("out.csv")]);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn atomic_write_creates_parent_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.txt");
        write_atomic(&path, b"x").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"x");
    }
}
