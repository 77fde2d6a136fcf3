//! Equal-accuracy optimization race: every archived seed is re-optimized
//! under each scheme at that scheme's `dt*`.

use magnus_core::optimizer::{minimize, OptimizationRecord, TerminationReason};
use magnus_core::{ControlProblem, SchemeKind, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::archive::{PulseArchive, Setup};
use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::scan::ScanResult;

/// Infidelity levels at which the cost to reach them is reported.
pub const LEVELS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub scheme: SchemeKind,
    pub seed_index: usize,
    pub iteration: usize,
    pub infidelity: f64,
    pub wall_time: f64,
    pub exponentials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeAxis {
    WallTime,
    Exponentials,
}

/// Smallest infidelity reached by any seed up to `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub scheme: SchemeKind,
    pub axis: EnvelopeAxis,
    pub x: f64,
    pub best_infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFinal {
    pub scheme: SchemeKind,
    pub seed_index: usize,
    /// On the race grid.
    pub final_infidelity: f64,
    pub true_infidelity: f64,
    pub converged: bool,
    pub termination: TerminationReason,
    pub exponentials: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    pub level: f64,
    /// Fewest exponentials any seed needed to reach `level`.
    pub exponentials: Option<usize>,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSchemeSummary {
    pub scheme: SchemeKind,
    pub n_steps: usize,
    pub dt: f64,
    pub seeds: usize,
    pub converged_seeds: usize,
    pub best_true_infidelity: f64,
    pub total_exponentials: usize,
    pub total_wall_time: f64,
    pub initialization_time: f64,
    pub level_costs: Vec<LevelCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Seeds that converged under every scheme.
    pub common_seeds: Vec<usize>,
    /// Largest spread of true final infidelity across schemes on those seeds.
    pub max_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceResult {
    pub schemes: Vec<RaceSchemeSummary>,
    pub finals: Vec<SeedFinal>,
    pub agreement: Option<Agreement>,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRow>,
    #[serde(skip)]
    pub envelopes: Vec<EnvelopeRow>,
}

impl RaceResult {
    pub fn summary(&self, scheme: SchemeKind) -> Option<&RaceSchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

fn envelope(scheme: SchemeKind, axis: EnvelopeAxis, mut points: Vec<(f64, f64)>) -> Vec<EnvelopeRow> {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    let mut out: Vec<EnvelopeRow> = Vec::new();
    for (x, f) in points {
        if f < best {
            best = f;
            out.push(EnvelopeRow {
                scheme,
                axis,
                x,
                best_infidelity: best,
            });
        }
    }
    out
}

fn level_costs(records: &[OptimizationRecord]) -> Vec<LevelCost> {
    LEVELS
        .iter()
        .map(|&level| {
            let firsts: Vec<(usize, f64)> = records
                .iter()
                .filter_map(|r| r.iterations.iter().find(|e| e.infidelity <= level))
                .map(|e| (e.exponentials, e.wall_time))
                .collect();
            LevelCost {
                level,
                exponentials: firsts.iter().map(|f| f.0).min(),
                wall_time: firsts.iter().map(|f| f.1).min_by(|a, b| a.total_cmp(b)),
            }
        })
        .collect()
}

/// Runs the race for every configured scheme.
///
/// Seeds run one after another so that the recorded wall times are not
/// skewed by contention.
pub fn run_race(config: &BenchConfig, archive: &PulseArchive, scan: &ScanResult) -> Result<RaceResult> {
    config.validate()?;
    if archive.is_empty() {
        return Err(BenchError::MissingInput("the pulse archive has no entries".into()));
    }
    let setup = Setup::new(config)?;
    let mut schemes = Vec::new();
    let mut finals = Vec::new();
    let mut trajectories = Vec::new();
    let mut envelopes = Vec::new();
    for &scheme in &config.schemes {
        let n_steps = scan
            .summary(scheme)
            .and_then(|s| s.n_star)
            .ok_or_else(|| BenchError::MissingInput(format!("no dt* for {scheme} in the scan result")))?;
        let grid = TimeGrid::new(config.ansatz.duration, n_steps)?;
        let problem = ControlProblem::new(
            setup.model.clone(),
            setup.ansatz.clone(),
            grid,
            scheme,
            setup.psi0.clone(),
            setup.target.clone(),
        )?;
        let mut records = Vec::new();
        let mut best_true = f64::INFINITY;
        for entry in archive.entries() {
            let opt = config.optimization_config(entry.seed);
            let b0 = setup.coefficients(&entry.initial)?;
            let (b, record) = minimize(&problem, &b0, &opt)?;
            let (f_true, _) = setup.true_infidelity(&b, config.seeds.true_infidelity_tolerance, n_steps)?;
            best_true = best_true.min(f_true);
            let last = record.iterations.last().expect("record holds the initial point");
            finals.push(SeedFinal {
                scheme,
                seed_index: entry.index,
                final_infidelity: last.infidelity,
                true_infidelity: f_true,
                converged: record.converged,
                termination: record.termination_reason.unwrap_or(TerminationReason::MaxIterations),
                exponentials: last.exponentials,
                wall_time: last.wall_time,
            });
            trajectories.extend(record.iterations.iter().map(|e| TrajectoryRow {
                scheme,
                seed_index: entry.index,
                iteration: e.iteration,
                infidelity: e.infidelity,
                wall_time: e.wall_time,
                exponentials: e.exponentials,
            }));
            records.push(record);
        }
        let by_time = records
            .iter()
            .flat_map(|r| r.iterations.iter().map(|e| (e.wall_time, e.infidelity)))
            .collect();
        let by_exps = records
            .iter()
            .flat_map(|r| r.iterations.iter().map(|e| (e.exponentials as f64, e.infidelity)))
            .collect();
        envelopes.extend(envelope(scheme, EnvelopeAxis::WallTime, by_time));
        envelopes.extend(envelope(scheme, EnvelopeAxis::Exponentials, by_exps));
        schemes.push(RaceSchemeSummary {
            scheme,
            n_steps,
            dt: grid.dt(),
            seeds: records.len(),
            converged_seeds: records.iter().filter(|r| r.converged).count(),
            best_true_infidelity: best_true,
            total_exponentials: records
                .iter()
                .filter_map(|r| r.iterations.last())
                .map(|e| e.exponentials)
                .sum(),
            total_wall_time: records.iter().filter_map(|r| r.iterations.last()).map(|e| e.wall_time).sum(),
            initialization_time: problem.initialization_time().as_secs_f64(),
            level_costs: level_costs(&records),
        });
    }
    let agreement = agreement(&config.schemes, &finals);
    Ok(RaceResult {
        schemes,
        finals,
        agreement,
        trajectories,
        envelopes,
    })
}

fn agreement(schemes: &[SchemeKind], finals: &[SeedFinal]) -> Option<Agreement> {
    let mut seeds: Vec<usize> = finals.iter().map(|f| f.seed_index).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut common = Vec::new();
    let mut spread = 0.0f64;
    for seed in seeds {
        let runs: Vec<&SeedFinal> = finals.iter().filter(|f| f.seed_index == seed).collect();
        if runs.len() != schemes.len() || !runs.iter().all(|f| f.converged) {
            continue;
        }
        let lo = runs.iter().map(|f| f.true_infidelity).fold(f64::INFINITY, f64::min);
        let hi = runs.iter().map(|f| f.true_infidelity).fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        common.push(seed);
    }
    (!common.is_empty()).then_some(Agreement {
        common_seeds: common,
        max_spread: spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_running_minimum() {
        let env = envelope(
            SchemeKind::M4Exact,
            EnvelopeAxis::WallTime,
            vec![(3.0, 0.2), (1.0, 0.5), (2.0, 0.6), (4.0, 0.1)],
        );
        let pts: Vec<(f64, f64)> = env.iter().map(|r| (r.x, r.best_infidelity)).collect();
        assert_eq!(pts, vec![(1.0, 0.5), (3.0, 0.2), (4.0, 0.1)]);
    }

    fn fin(scheme: SchemeKind, seed: usize, f: f64, converged: bool) -> SeedFinal {
        SeedFinal {
            scheme,
            seed_index: seed,
            final_infidelity: f,
            true_infidelity: f,
            converged,
            termination: TerminationReason::Converged,
            exponentials: 0,
            wall_time: 0.0,
        }
    }

    #[test]
    fn agreement_uses_seeds_converged_everywhere() {
        let s = [SchemeKind::M2Approx, SchemeKind::M4Exact];
        let finals = vec![
            fin(s[0], 0, 1e-3, true),
            fin(s[1], 0, 1.5e-3, true),
            fin(s[0], 1, 0.1, false),
            fin(s[1], 1, 0.5, true),
        ];
        let a = agreement(&s, &finals).unwrap();
        assert_eq!(a.common_seeds, vec![0]);
        assert!((a.max_spread - 5e-4).abs() < 1e-15);
        assert!(agreement(&s, &finals[2..]).is_none());
    }
}
