//! On-disk cache of scheme kernels.
//!
//! One JSON document per `(ansatz, grid, scheme)`:
//!
//! ```text
//! { "format": 1, "key": { "ansatz": "<sha256 hex>", "duration": .., "n_steps": .., "scheme": "M4exact" },
//!   "kernels": { "scheme": .., "grid": {..}, "n_basis": .., "c1_weights": [..],
//!                "c2_weights": [..] | null, "c3_kernel": [..] | null } }
//! ```
//!
//! File name: `<scheme>-n<n_steps>-<first 16 hex digits of the ansatz hash>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SchemeKernels, SchemeKind, TimeGrid};
use crate::controls::ControlAnsatz;
use crate::error::{Error, Result};
use crate::scalar::Real;

const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub ansatz: String,
    pub duration: f64,
    pub n_steps: usize,
    pub scheme: SchemeKind,
}

impl CacheKey {
    pub fn new<T: Real>(ansatz: &ControlAnsatz<T>, grid: &TimeGrid<T>, scheme: SchemeKind) -> Result<Self> {
        let json = serde_json::to_vec(ansatz).map_err(|e| Error::Cache(e.to_string()))?;
        Ok(Self {
            ansatz: hex::encode(Sha256::digest(&json)),
            duration: grid.duration().as_f64(),
            n_steps: grid.n_steps(),
            scheme,
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}-n{}-{}.json", self.scheme, self.n_steps, &self.ansatz[..16])
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct CacheFile<T: Real> {
    format: u32,
    key: CacheKey,
    kernels: SchemeKernels<T>,
}

pub fn cache_path(dir: &Path, key: &CacheKey) -> PathBuf {
    dir.join(key.file_name())
}

pub fn store<T: Real>(dir: &Path, key: &CacheKey, kernels: &SchemeKernels<T>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Cache(e.to_string()))?;
    let path = cache_path(dir, key);
    let doc = CacheFile {
        format: FORMAT,
        key: key.clone(),
        kernels: kernels.clone(),
    };
    let bytes = serde_json::to_vec(&doc).map_err(|e| Error::Cache(e.to_string()))?;
    fs::write(&path, bytes).map_err(|e| Error::Cache(e.to_string()))?;
    Ok(path)
}

/// `Ok(None)` when no file exists for `key`.
pub fn load<T: Real>(dir: &Path, key: &CacheKey) -> Result<Option<SchemeKernels<T>>> {
    let path = cache_path(dir, key);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::Cache(e.to_string())),
    };
    let doc: CacheFile<T> = serde_json::from_slice(&bytes).map_err(|e| Error::Cache(e.to_string()))?;
    if doc.format != FORMAT || &doc.key != key {
        return Err(Error::Cache(format!("{} does not match the requested key", path.display())));
    }
    Ok(Some(doc.kernels))
}

/// Loads kernels from `dir` or computes and stores them. The flag reports a cache hit.
pub fn load_or_compute<T: Real>(
    dir: &Path,
    ansatz: &ControlAnsatz<T>,
    grid: &TimeGrid<T>,
    scheme: SchemeKind,
) -> Result<(SchemeKernels<T>, bool)> {
    let key = CacheKey::new(ansatz, grid, scheme)?;
    if let Some(k) = load(dir, &key)? {
        return Ok((k, true));
    }
    let kernels = SchemeKernels::precompute(scheme, ansatz, grid)?;
    store(dir, &key, &kernels)?;
    Ok((kernels, false))
}
