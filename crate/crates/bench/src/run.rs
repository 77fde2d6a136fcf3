//! Stage drivers that read and write the run directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::archive::{run_seed_stage, PulseArchive};
use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::gradcheck::{run_gradcheck, summarize, GradcheckSummary};
use crate::init::{run_init_report, InitRow};
use crate::output::*;
use crate::race::{run_race, RaceResult};
use crate::scan::{run_dt_scan, ScanResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SeedStage,
    DtScan,
    Race,
    InitReport,
    Gradcheck,
}

/// Creates `out/<hash>/` and echoes the configuration into it.
pub fn prepare_run_dir(config: &BenchConfig) -> Result<PathBuf> {
    config.validate()?;
    let dir = config.run_dir();
    fs::create_dir_all(&dir)?;
    write_json(&dir.join(CONFIG_JSON), config)?;
    Ok(dir)
}

fn load<T: serde::de::DeserializeOwned>(dir: &Path, name: &str, stage: &str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(BenchError::MissingInput(format!(
            "{} not found; run `{stage}` first",
            path.display()
        )));
    }
    read_json(&path)
}

pub fn load_archive(dir: &Path) -> Result<PulseArchive> {
    load(dir, ARCHIVE_JSON, "seed-stage")
}

pub fn load_scan(dir: &Path) -> Result<ScanResult> {
    load(dir, SCAN_JSON, "dt-scan")
}

pub fn seed_stage(config: &BenchConfig) -> Result<PulseArchive> {
    let dir = prepare_run_dir(config)?;
    let archive = run_seed_stage(config)?;
    write_json(&dir.join(ARCHIVE_JSON), &archive)?;
    Ok(archive)
}

pub fn dt_scan(config: &BenchConfig) -> Result<ScanResult> {
    let dir = prepare_run_dir(config)?;
    let archive = load_archive(&dir)?;
    let scan = run_dt_scan(config, &archive)?;
    write_csv(&dir.join(SCAN_CSV), &scan.rows)?;
    write_json(&dir.join(SCAN_JSON), &scan)?;
    Ok(scan)
}

pub fn race(config: &BenchConfig) -> Result<RaceResult> {
    let dir = prepare_run_dir(config)?;
    let archive = load_archive(&dir)?;
    let scan = load_scan(&dir)?;
    let result = run_race(config, &archive, &scan)?;
    write_csv(&dir.join(TRAJECTORIES_CSV), &result.trajectories)?;
    write_csv(&dir.join(ENVELOPE_CSV), &result.envelopes)?;
    write_json(&dir.join(RACE_JSON), &result)?;
    Ok(result)
}

pub fn init_report(config: &BenchConfig) -> Result<Vec<InitRow>> {
    let dir = prepare_run_dir(config)?;
    let rows = run_init_report(config, &dir.join(CACHE_DIR))?;
    write_csv(&dir.join(INIT_CSV), &rows)?;
    Ok(rows)
}

pub fn gradcheck(config: &BenchConfig) -> Result<GradcheckSummary> {
    let dir = prepare_run_dir(config)?;
    let rows = run_gradcheck(config)?;
    write_csv(&dir.join(GRADCHECK_CSV), &rows)?;
    let summary = summarize(&rows);
    write_json(&dir.join(GRADCHECK_JSON), &summary)?;
    Ok(summary)
}

/// Runs one stage and returns a one-line report for standard output.
pub fn execute(stage: Stage, config: &BenchConfig) -> Result<String> {
    let dir = config.run_dir();
    let line = match stage {
        Stage::SeedStage => {
            let a = seed_stage(config)?;
            let failed = a.outcomes.len() - a.len();
            format!("seed-stage: {} pulses archived, {failed} failed", a.len())
        }
        Stage::DtScan => {
            let s = dt_scan(config)?;
            let parts: Vec<String> = s
                .summaries
                .iter()
                .map(|m| match (m.slope, m.n_star) {
                    (Some(k), Some(n)) => format!("{} slope {k:.2} N* {n}", m.scheme),
                    (Some(k), None) => format!("{} slope {k:.2} ({})", m.scheme, m.status),
                    _ => format!("{} ({})", m.scheme, m.status),
                })
                .collect();
            format!("dt-scan: {}", parts.join("; "))
        }
        Stage::Race => {
            let r = race(config)?;
            let parts: Vec<String> = r
                .schemes
                .iter()
                .map(|s| format!("{} best F {:.3e} at N {}", s.scheme, s.best_true_infidelity, s.n_steps))
                .collect();
            format!("race: {}", parts.join("; "))
        }
        Stage::InitReport => {
            let rows = init_report(config)?;
            format!("init-report: {} rows", rows.len())
        }
        Stage::Gradcheck => {
            let s = gradcheck(config)?;
            if !s.passed() {
                return Err(BenchError::Check(format!(
                    "gradient mismatch on {} of {} components (max rel error {:.2e})",
                    s.failures, s.components, s.max_rel_error
                )));
            }
            format!(
                "gradcheck: {} components pass, max rel error {:.2e}",
                s.components, s.max_rel_error
            )
        }
    };
    Ok(format!("{line}\noutput: {}", dir.display()))
}
