//! Benchmark configuration (TOML).
//!
//! ```toml
//! schemes = ["M2exact", "M2approx", "M4exact", "M4approx"]
//! target_error = 1e-6
//!
//! [chain]
//! n_spins = 5
//! rwa = true
//!
//! [scan.second_order]
//! min_steps = 40
//! max_steps = 640
//! points = 7
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use magnus_core::optimizer::OptimizationConfig;
use magnus_core::spinchain::chain_ansatz;
use magnus_core::{ControlAnsatz, SchemeKind, SpinChainParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_spins: usize,
    pub coupling: f64,
    pub next_coupling: f64,
    pub frequency: f64,
    pub rwa: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_spins: 5,
            coupling: 1.0,
            next_coupling: 0.1,
            frequency: 20.0,
            rwa: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub n_basis: usize,
    /// `T` in units of `1/J`.
    pub duration: f64,
    /// Ramp length as a fraction of `T`.
    pub ramp_fraction: f64,
    /// Symmetric amplitude bound in units of `J`.
    pub amplitude: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            n_basis: 8,
            duration: 2.9,
            ramp_fraction: 0.1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub count: usize,
    pub rng_seed: u64,
    /// M4exact step count used while optimizing the seeds.
    pub optimization_steps: usize,
    /// Convergence tolerance for the stamped true infidelities.
    pub true_infidelity_tolerance: f64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            count: 20,
            rng_seed: 0,
            optimization_steps: 100,
            true_infidelity_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRange {
    pub min_steps: usize,
    pub max_steps: usize,
    pub points: usize,
}

/// Which archived pulses a scan evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseSet {
    /// Seed-stage optima.
    Optimized,
    /// The random initial guesses.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub second_order: StepRange,
    pub fourth_order: StepRange,
    pub pulse_set: PulseSet,
    /// Archived pulses used (first `n` entries); `0` means all.
    pub max_pulses: usize,
    /// Scan points with mean error below this are left out of the slope fit.
    pub noise_floor: f64,
    /// Timed repetitions per scan point.
    pub timing_repeats: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            second_order: StepRange {
                min_steps: 40,
                max_steps: 640,
                points: 7,
            },
            fourth_order: StepRange {
                min_steps: 10,
                max_steps: 160,
                points: 7,
            },
            pulse_set: PulseSet::Optimized,
            max_pulses: 0,
            noise_floor: 1e-11,
            timing_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub constraint_tolerance: f64,
    pub initial_coefficient_scale: f64,
    pub constraint_samples: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = OptimizationConfig::default();
        Self {
            max_iterations: d.max_iterations,
            gradient_tolerance: d.gradient_tolerance,
            constraint_tolerance: d.constraint_tolerance,
            initial_coefficient_scale: d.initial_coefficient_scale,
            constraint_samples: d.constraint_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitReportConfig {
    pub step_counts: Vec<usize>,
    pub repeats: usize,
}

impl Default for InitReportConfig {
    fn default() -> Self {
        Self {
            step_counts: vec![20, 40, 80, 160],
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub schemes: Vec<SchemeKind>,
    pub target_error: f64,
    pub include_initialization: bool,
    pub output_dir: PathBuf,
    pub chain: ChainConfig,
    pub ansatz: AnsatzConfig,
    pub seeds: SeedConfig,
    pub optimizer: OptimizerSettings,
    pub scan: ScanConfig,
    pub init_report: InitReportConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            schemes: SchemeKind::MAGNUS.to_vec(),
            target_error: 1e-6,
            include_initialization: false,
            output_dir: PathBuf::from("out"),
            chain: ChainConfig::default(),
            ansatz: AnsatzConfig::default(),
            seeds: SeedConfig::default(),
            optimizer: OptimizerSettings::default(),
            scan: ScanConfig::default(),
            init_report: InitReportConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(invalid("no schemes selected"));
        }
        if self.schemes.contains(&SchemeKind::ReferenceRk) {
            return Err(invalid("the RK reference is not a benchmark scheme"));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(invalid("duplicate scheme"));
        }
        if !(self.target_error > 0.0 && self.target_error < 1.0) {
            return Err(invalid("target_error must lie in (0, 1)"));
        }
        let c = &self.chain;
        if c.n_spins < 3 || c.n_spins > 10 {
            return Err(invalid("chain.n_spins must be between 3 and 10"));
        }
        if !(c.coupling > 0.0) || !c.next_coupling.is_finite() {
            return Err(invalid("chain couplings must be finite with coupling > 0"));
        }
        if !c.rwa && !(c.frequency > 0.0) {
            return Err(invalid("lab-frame runs need chain.frequency > 0"));
        }
        let a = &self.ansatz;
        if a.n_basis == 0 || !(a.duration > 0.0) || !(a.amplitude > 0.0) {
            return Err(invalid("ansatz needs n_basis > 0, duration > 0, amplitude > 0"));
        }
        if !(a.ramp_fraction > 0.0 && a.ramp_fraction <= 0.5) {
            return Err(invalid("ansatz.ramp_fraction must lie in (0, 0.5]"));
        }
        let s = &self.seeds;
        if s.count == 0 || s.optimization_steps == 0 {
            return Err(invalid("seeds.count and seeds.optimization_steps must be positive"));
        }
        if !(s.true_infidelity_tolerance >= 1e-12) {
            return Err(invalid("seeds.true_infidelity_tolerance must be at least 1e-12"));
        }
        for (name, r) in [("second_order", &self.scan.second_order), ("fourth_order", &self.scan.fourth_order)] {
            if r.min_steps == 0 || r.max_steps < 10 * r.min_steps {
                return Err(invalid(format!("scan.{name} must span at least one decade of steps")));
            }
            if r.points < 6 {
                return Err(invalid(format!("scan.{name} needs at least 6 points")));
            }
            if self.scan_steps_for(r).len() < 6 {
                return Err(invalid(format!("scan.{name} collapses to fewer than 6 aligned step counts")));
            }
        }
        if self.scan.timing_repeats == 0 {
            return Err(invalid("scan.timing_repeats must be positive"));
        }
        if self.init_report.step_counts.is_empty() || self.init_report.step_counts.contains(&0) {
            return Err(invalid("init_report.step_counts must be non-empty and positive"));
        }
        self.optimization_config(0).validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Short digest of the configuration, used as the run directory name.
    pub fn hash(&self) -> String {
        let mut echo = self.clone();
        echo.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&echo).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.hash())
    }

    pub fn chain_params(&self) -> SpinChainParams {
        SpinChainParams {
            n_spins: self.chain.n_spins,
            coupling: self.chain.coupling,
            next_coupling: self.chain.next_coupling,
            frequency: self.chain.frequency,
            rwa: self.chain.rwa,
        }
    }

    pub fn build_ansatz(&self) -> Result<ControlAnsatz> {
        let a = &self.ansatz;
        Ok(chain_ansatz(
            &self.chain_params(),
            a.n_basis,
            a.duration,
            a.duration * a.ramp_fraction,
            a.amplitude,
        )?)
    }

    /// Seed `index` of the batch.
    pub fn seed_for(&self, index: usize) -> u64 {
        self.seeds.rng_seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
    }

    pub fn optimization_config(&self, seed: u64) -> OptimizationConfig {
        let o = &self.optimizer;
        OptimizationConfig {
            max_iterations: o.max_iterations,
            gradient_tolerance: o.gradient_tolerance,
            constraint_tolerance: o.constraint_tolerance,
            seed,
            initial_coefficient_scale: o.initial_coefficient_scale,
            constraint_samples: o.constraint_samples,
            record_coefficients: false,
            include_initialization: self.include_initialization,
        }
    }

    /// Smallest step count whose grid contains the ramp breakpoints.
    ///
    /// The ramp is only C1 at `tau` and `T - tau`; grids that straddle those
    /// points lose an order in the fourth-order schemes.
    pub fn step_alignment(&self) -> usize {
        let r = self.ansatz.ramp_fraction;
        (1..=1000)
            .find(|&m| {
                let x = m as f64 * r;
                (x - x.round()).abs() < 1e-9
            })
            .unwrap_or(1)
    }

    /// `n` rounded up to the step alignment.
    pub fn aligned(&self, n: usize) -> usize {
        let m = self.step_alignment();
        n.div_ceil(m).max(1) * m
    }

    /// Log-spaced, aligned, de-duplicated step counts of `range`.
    pub fn scan_steps_for(&self, range: &StepRange) -> Vec<usize> {
        let m = self.step_alignment();
        let lo = range.min_steps as f64;
        let ratio = range.max_steps as f64 / lo;
        let mut steps: Vec<usize> = (0..range.points)
            .map(|i| {
                let x = lo * ratio.powf(i as f64 / (range.points - 1).max(1) as f64);
                (((x / m as f64).round() as usize).max(1)) * m
            })
            .collect();
        steps.dedup();
        steps
    }

    pub fn scan_steps(&self, scheme: SchemeKind) -> Vec<usize> {
        if scheme.order() == 2 {
            self.scan_steps_for(&self.scan.second_order)
        } else {
            self.scan_steps_for(&self.scan.fourth_order)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(BenchConfig::from_toml("").unwrap(), BenchConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(BenchConfig::from_toml("bogus = 1"), Err(BenchError::Config(_))));
        assert!(BenchConfig::from_toml("[chain]\nspins = 3").is_err());
    }

    #[test]
    fn scheme_names_parse() {
        let cfg = BenchConfig::from_toml("schemes = [\"M4exact\", \"M2approx\"]").unwrap();
        assert_eq!(cfg.schemes, vec![SchemeKind::M4Exact, SchemeKind::M2Approx]);
        assert!(BenchConfig::from_toml("schemes = [\"RK4\"]").is_err());
        assert!(BenchConfig::from_toml("schemes = [\"M4exact\", \"M4exact\"]").is_err());
    }

    #[test]
    fn scan_range_must_span_a_decade() {
        let text = "[scan.second_order]\nmin_steps = 40\nmax_steps = 200\npoints = 7";
        assert!(BenchConfig::from_toml(text).is_err());
        let text = "[scan.second_order]\nmin_steps = 40\nmax_steps = 400\npoints = 5";
        assert!(BenchConfig::from_toml(text).is_err());
    }

    #[test]
    fn steps_align_with_ramp() {
        let cfg = BenchConfig::default();
        assert_eq!(cfg.step_alignment(), 10);
        let steps = cfg.scan_steps(SchemeKind::M4Exact);
        assert_eq!(steps, vec![10, 20, 30, 40, 60, 100, 160]);
        assert!(steps.iter().all(|n| n % 10 == 0));
        assert_eq!(cfg.aligned(41), 50);
        let mut odd = cfg.clone();
        odd.ansatz.ramp_fraction = 0.125;
        assert_eq!(odd.step_alignment(), 8);
    }

    #[test]
    fn hash_ignores_output_dir_but_not_content() {
        let a = BenchConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seeds.rng_seed = 9;
        assert_ne!(a.hash(), b.hash());
    }
}
