//! Finite-difference check of the analytic gradient on random small chains.

use magnus_core::spinchain::{chain_ansatz, transfer_problem};
use magnus_core::{PulseCoefficients, SchemeKind, SpinChainParams, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::error::Result;

pub const INSTANCES: usize = 10;
pub const STEP_COUNTS: [usize; 2] = [16, 64];
pub const EPSILON: f64 = 1e-6;
pub const REL_TOLERANCE: f64 = 1e-6;
pub const ABS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub instance: usize,
    pub scheme: SchemeKind,
    pub n_spins: usize,
    pub rwa: bool,
    pub n_steps: usize,
    /// Flat coefficient index `k * n_basis + n`.
    pub component: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub components: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn summarize(rows: &[GradcheckRow]) -> GradcheckSummary {
    GradcheckSummary {
        components: rows.len(),
        failures: rows.iter().filter(|r| !r.pass).count(),
        max_rel_error: rows.iter().map(|r| r.rel_error).fold(0.0, f64::max),
        max_abs_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
    }
}

struct Instance {
    params: SpinChainParams,
    n_steps: usize,
    coeffs: Vec<f64>,
}

fn instance(config: &BenchConfig, index: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed_for(index) ^ 0x6772_6164);
    let n_spins = 3 + index % 2;
    let n_steps = STEP_COUNTS[(index / 2) % 2];
    // the last two instances run in the lab frame
    let rwa = index + 2 < INSTANCES;
    let mut params = SpinChainParams::new(n_spins, config.chain.coupling, rwa);
    params.next_coupling = config.chain.next_coupling;
    params.frequency = config.chain.frequency;
    let n = 2 * config.ansatz.n_basis;
    let s = config.optimizer.initial_coefficient_scale;
    let coeffs = (0..n).map(|_| rng.random_range(-s..=s)).collect();
    Instance { params, n_steps, coeffs }
}

fn check(config: &BenchConfig, index: usize, scheme: SchemeKind) -> Result<Vec<GradcheckRow>> {
    let inst = instance(config, index);
    let a = &config.ansatz;
    let ansatz = chain_ansatz(&inst.params, a.n_basis, a.duration, a.duration * a.ramp_fraction, a.amplitude)?;
    let grid = TimeGrid::new(a.duration, inst.n_steps)?;
    let problem = transfer_problem(&inst.params, ansatz, grid, scheme)?;
    let b = PulseCoefficients::from_flat(2, a.n_basis, inst.coeffs.clone())?;
    let analytic = problem.gradient(&b)?.grad.into_vec();
    let mut rows = Vec::with_capacity(analytic.len());
    for (i, &g) in analytic.iter().enumerate() {
        let mut plus = b.clone();
        plus.as_mut_slice()[i] += EPSILON;
        let mut minus = b.clone();
        minus.as_mut_slice()[i] -= EPSILON;
        let fd = (problem.infidelity(&plus)? - problem.infidelity(&minus)?) / (2.0 * EPSILON);
        let abs_error = (g - fd).abs();
        let rel_error = abs_error / fd.abs().max(g.abs()).max(f64::MIN_POSITIVE);
        rows.push(GradcheckRow {
            instance: index,
            scheme,
            n_spins: inst.params.n_spins,
            rwa: inst.params.rwa,
            n_steps: inst.n_steps,
            component: i,
            analytic: g,
            finite_difference: fd,
            abs_error,
            rel_error,
            pass: rel_error <= REL_TOLERANCE || abs_error <= ABS_TOLERANCE,
        });
    }
    Ok(rows)
}

/// Runs every `(instance, scheme)` pair; rows come back ordered by instance,
/// then scheme, then component.
pub fn run_gradcheck(config: &BenchConfig) -> Result<Vec<GradcheckRow>> {
    config.validate()?;
    let jobs: Vec<(usize, SchemeKind)> = (0..INSTANCES)
        .flat_map(|i| SchemeKind::MAGNUS.into_iter().map(move |s| (i, s)))
        .collect();
    let chunks = jobs
        .par_iter()
        .map(|&(i, s)| check(config, i, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}
