//! Run manifests written next to every CLI output.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to rerun a command and check its outputs.
///
/// No timestamps or host details are recorded, so rerunning an identical
/// command yields an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub global_seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, global_seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            global_seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let d = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), d);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> std::io::Result<()> {
        let d = file_digest(path)?;
        self.outputs.insert(path.display().to_string(), d);
        Ok(())
    }

    pub fn write_beside(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = manifest_path(output);
        let mut s = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        s.push('\n');
        std::fs::write(&path, s)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Hex SHA-256 of a file, or of every file below a directory in sorted
/// relative-path order.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(std::fs::read(&f)?);
        }
    } else {
        let mut file = std::fs::File::open(path)?;
        let mut buf = [0u8; 1 << 16];
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}
