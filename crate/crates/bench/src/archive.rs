//! Seed stage: optimize random initial pulses at a fine M4exact grid and
//! stamp each optimum with its converged ("true") infidelity.

use magnus_core::optimizer::{minimize, random_seed_pulse, TerminationReason};
use magnus_core::propagators::true_infidelity;
use magnus_core::spinchain::{build_model, initial_state, target_state, transfer_problem};
use magnus_core::controls::BasisSet;
use magnus_core::{ControlAnsatz, ModelOperators, PulseCoefficients, SchemeKind, StateVector, TimeGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, PulseSet};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub index: usize,
    pub seed: u64,
    /// Random initial guess, flattened `(k, n)`.
    pub initial: Vec<f64>,
    pub initial_true_infidelity: f64,
    pub optimized: Vec<f64>,
    /// Infidelity reported by the optimizer on its own grid.
    pub optimized_infidelity: f64,
    pub true_infidelity: f64,
    /// Step count at which the true infidelity converged.
    pub true_steps: usize,
    pub iterations: usize,
    pub termination: TerminationReason,
}

/// Entry or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub index: usize,
    pub seed: u64,
    pub entry: Option<ArchiveEntry>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseArchive {
    pub config_hash: String,
    pub optimization_steps: usize,
    pub outcomes: Vec<SeedOutcome>,
}

impl PulseArchive {
    pub fn entries(&self) -> impl Iterator<Item = &ArchiveEntry> {
        self.outcomes.iter().filter_map(|o| o.entry.as_ref())
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(coefficients, true infidelity)` of the selected pulse set.
    pub fn pulses(&self, set: PulseSet, limit: usize) -> Vec<(Vec<f64>, f64)> {
        let take = if limit == 0 { usize::MAX } else { limit };
        self.entries()
            .take(take)
            .map(|e| match set {
                PulseSet::Optimized => (e.optimized.clone(), e.true_infidelity),
                PulseSet::Initial => (e.initial.clone(), e.initial_true_infidelity),
            })
            .collect()
    }
}

/// Model, ansatz and end states shared by every stage.
pub(crate) struct Setup {
    pub model: ModelOperators,
    pub ansatz: ControlAnsatz,
    pub psi0: StateVector,
    pub target: StateVector,
}

impl Setup {
    pub fn new(config: &BenchConfig) -> Result<Self> {
        let params = config.chain_params();
        Ok(Self {
            model: build_model(&params)?,
            ansatz: config.build_ansatz()?,
            psi0: initial_state(&params)?,
            target: target_state(&params)?,
        })
    }

    pub fn coefficients(&self, flat: &[f64]) -> Result<PulseCoefficients> {
        Ok(PulseCoefficients::from_flat(
            self.ansatz.n_controls(),
            self.ansatz.n_basis(),
            flat.to_vec(),
        )?)
    }

    pub fn true_infidelity(&self, b: &PulseCoefficients, tolerance: f64, n_start: usize) -> Result<(f64, usize)> {
        let t = true_infidelity(&self.model, &self.ansatz, b, &self.psi0, &self.target, tolerance, n_start)?;
        Ok((t.value, t.n_steps))
    }
}

fn run_seed(config: &BenchConfig, setup: &Setup, index: usize) -> Result<ArchiveEntry> {
    let seed = config.seed_for(index);
    let opt = config.optimization_config(seed);
    let b0 = random_seed_pulse(&setup.ansatz, &opt)?;
    let grid = TimeGrid::new(config.ansatz.duration, config.aligned(config.seeds.optimization_steps))?;
    let problem = transfer_problem(&config.chain_params(), setup.ansatz.clone(), grid, SchemeKind::M4Exact)?;
    let (b, record) = minimize(&problem, &b0, &opt)?;
    let tol = config.seeds.true_infidelity_tolerance;
    let n_start = config.aligned(config.seeds.optimization_steps);
    let (initial_true, _) = setup.true_infidelity(&b0, tol, n_start)?;
    let (true_value, true_steps) = setup.true_infidelity(&b, tol, n_start)?;
    Ok(ArchiveEntry {
        index,
        seed,
        initial: b0.into_vec(),
        initial_true_infidelity: initial_true,
        optimized: b.into_vec(),
        optimized_infidelity: record.final_infidelity().unwrap_or(f64::NAN),
        true_infidelity: true_value,
        true_steps,
        iterations: record.iterations.len().saturating_sub(1),
        termination: record.termination_reason.unwrap_or(TerminationReason::MaxIterations),
    })
}

/// Optimizes every seed; failures are recorded per seed and do not stop the stage.
pub fn run_seed_stage(config: &BenchConfig) -> Result<PulseArchive> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let mut outcomes: Vec<SeedOutcome> = (0..config.seeds.count)
        .into_par_iter()
        .map(|index| match run_seed(config, &setup, index) {
            Ok(entry) => SeedOutcome {
                index,
                seed: entry.seed,
                entry: Some(entry),
                error: None,
            },
            Err(e) => SeedOutcome {
                index,
                seed: config.seed_for(index),
                entry: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    outcomes.sort_by_key(|o| o.index);
    Ok(PulseArchive {
        config_hash: config.hash(),
        optimization_steps: config.aligned(config.seeds.optimization_steps),
        outcomes,
    })
}
