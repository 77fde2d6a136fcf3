//! Run directory layout and CSV/JSON writers.
//!
//! Every CSV has a header row; column meanings are listed in the README.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

pub const CONFIG_JSON: &str = "config.json";
pub const ARCHIVE_JSON: &str = "archive.json";
pub const SCAN_CSV: &str = "scan.csv";
pub const SCAN_JSON: &str = "scan_summary.json";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const ENVELOPE_CSV: &str = "envelope.csv";
pub const RACE_JSON: &str = "race_summary.json";
pub const INIT_CSV: &str = "init.csv";
pub const GRADCHECK_CSV: &str = "gradcheck.csv";
pub const GRADCHECK_JSON: &str = "gradcheck_summary.json";
pub const CACHE_DIR: &str = "kernel_cache";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
