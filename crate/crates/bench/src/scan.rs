//! Step-size scans: infidelity defect and wall time against `dt`, order
//! slopes, and the equal-accuracy step `dt*` per scheme.

use std::time::Instant;

use magnus_core::{ControlProblem, SchemeKind, TimeGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{PulseArchive, Setup};
use crate::config::BenchConfig;
use crate::error::{BenchError, Result};

/// One `(scheme, dt)` point, averaged over the scanned pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub scheme: SchemeKind,
    pub n_steps: usize,
    pub dt: f64,
    pub mean_error: f64,
    pub min_error: f64,
    pub max_error: f64,
    /// Seconds per infidelity evaluation, kernel set-up excluded.
    pub mean_wall_time: f64,
    /// Largest `| |psi(T)| - 1 |` over the pulses.
    pub max_norm_defect: f64,
    pub pulses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: SchemeKind,
    /// Least-squares slope of `ln(mean_error)` against `ln(dt)`.
    pub slope: Option<f64>,
    pub fit_points: usize,
    pub dt_star: Option<f64>,
    /// `T / dt*` rounded up to the step alignment.
    pub n_star: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub target_error: f64,
    pub rows: Vec<ScanRow>,
    pub summaries: Vec<SchemeSummary>,
}

impl ScanResult {
    pub fn summary(&self, scheme: SchemeKind) -> Option<&SchemeSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme)
    }

    pub fn rows_for(&self, scheme: SchemeKind) -> impl Iterator<Item = &ScanRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

/// Log-log interpolated step at which `errors` first drops to `target`.
///
/// `points` are `(dt, error)` ordered from coarse to fine.
pub fn crossing_step(points: &[(f64, f64)], target: f64) -> std::result::Result<f64, String> {
    let Some(first) = points.first() else {
        return Err("no scan points".into());
    };
    if first.1 <= target {
        return Err("error already below target at the coarsest step".into());
    }
    for w in points.windows(2) {
        let (dt0, e0) = w[0];
        let (dt1, e1) = w[1];
        if e1 <= target {
            let s = (target.ln() - e0.ln()) / (e1.ln() - e0.ln());
            return Ok((dt0.ln() + s * (dt1.ln() - dt0.ln())).exp());
        }
    }
    Err("target error not reached in the scan range".into())
}

fn scan_scheme(config: &BenchConfig, setup: &Setup, pulses: &[(Vec<f64>, f64)], scheme: SchemeKind) -> Result<Vec<ScanRow>> {
    let duration = config.ansatz.duration;
    let coeffs = pulses
        .iter()
        .map(|(b, _)| setup.coefficients(b))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for n in config.scan_steps(scheme) {
        let grid = TimeGrid::new(duration, n)?;
        let problem = ControlProblem::new(
            setup.model.clone(),
            setup.ansatz.clone(),
            grid,
            scheme,
            setup.psi0.clone(),
            setup.target.clone(),
        )?;
        let evals = coeffs
            .par_iter()
            .zip(pulses)
            .map(|(b, (_, f_true))| -> Result<(f64, f64)> {
                let psi = problem.final_state(b)?;
                let o = setup.target.inner(&psi);
                let f = 1.0 - o.norm_sqr();
                Ok(((f - f_true).abs(), (psi.norm() - 1.0).abs()))
            })
            .collect::<Result<Vec<_>>>()?;
        // dedicated sequential timing pass
        let start = Instant::now();
        for _ in 0..config.scan.timing_repeats {
            for b in &coeffs {
                problem.infidelity(b)?;
            }
        }
        let per_eval = start.elapsed().as_secs_f64() / (config.scan.timing_repeats * coeffs.len()) as f64;
        let errors: Vec<f64> = evals.iter().map(|e| e.0).collect();
        rows.push(ScanRow {
            scheme,
            n_steps: n,
            dt: grid.dt(),
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            min_error: errors.iter().copied().fold(f64::INFINITY, f64::min),
            max_error: errors.iter().copied().fold(0.0, f64::max),
            mean_wall_time: per_eval,
            max_norm_defect: evals.iter().map(|e| e.1).fold(0.0, f64::max),
            pulses: coeffs.len(),
        });
    }
    Ok(rows)
}

fn summarize(config: &BenchConfig, scheme: SchemeKind, rows: &[ScanRow]) -> SchemeSummary {
    let fit: Vec<&ScanRow> = rows.iter().filter(|r| r.mean_error > config.scan.noise_floor).collect();
    let slope = if fit.len() >= 3 {
        let x: Vec<f64> = fit.iter().map(|r| r.dt.ln()).collect();
        let y: Vec<f64> = fit.iter().map(|r| r.mean_error.ln()).collect();
        fit_slope(&x, &y)
    } else {
        None
    };
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt, r.mean_error)).collect();
    let (dt_star, n_star, status) = match crossing_step(&points, config.target_error) {
        Ok(dt) => {
            let n = config.aligned((config.ansatz.duration / dt).ceil() as usize);
            (Some(dt), Some(n), "ok".to_string())
        }
        Err(msg) => (None, None, msg),
    };
    SchemeSummary {
        scheme,
        slope,
        fit_points: fit.len(),
        dt_star,
        n_star,
        status,
    }
}

/// Scans every configured scheme over its step range.
pub fn run_dt_scan(config: &BenchConfig, archive: &PulseArchive) -> Result<ScanResult> {
    config.validate()?;
    if archive.is_empty() {
        return Err(BenchError::MissingInput("the pulse archive has no entries".into()));
    }
    let setup = Setup::new(config)?;
    let pulses = archive.pulses(config.scan.pulse_set, config.scan.max_pulses);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &scheme in &config.schemes {
        let scheme_rows = scan_scheme(config, &setup, &pulses, scheme)?;
        summaries.push(summarize(config, scheme, &scheme_rows));
        rows.extend(scheme_rows);
    }
    Ok(ScanResult {
        target_error: config.target_error,
        rows,
        summaries,
    })
}
