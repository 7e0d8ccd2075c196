use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// One record per command run, written to the output root.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<Artifact>,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Every file under `root` except the manifest, with checksums, sorted by path.
pub fn artifacts(root: &Path) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    walk(root, &mut files)?;
    files.sort();
    files
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST_NAME))
        .map(|p| {
            let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().into_owned();
            Ok(Artifact {
                path: rel,
                sha256: format!("{:x}", Sha256::digest(&bytes)),
            })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_NAME);
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}
