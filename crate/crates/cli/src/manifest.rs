use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mapclean::config::Method;
use mapclean::dataset::{list_frame_files, GT_FILE};
use mapclean::synth::SceneSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATASET_MANIFEST: &str = "manifest.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub preset: Option<String>,
    pub seed: u64,
    pub spec: SceneSpec,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub config_sha256: String,
    /// Ground-estimation seed the run used.
    pub seed: u64,
    pub dataset: PathBuf,
    pub dataset_sha256: String,
    /// Full effective configuration; hashing it gives `config_sha256`.
    pub config: String,
    pub parameter_count: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest over the frame files and ground truth, names included.
pub fn dataset_sha256(dir: &Path) -> Result<String> {
    let mut files = list_frame_files(dir)?;
    let gt = dir.join(GT_FILE);
    if gt.exists() {
        files.push(gt);
    }
    let mut h = Sha256::new();
    for f in files {
        let name = f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().into_owned();
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
