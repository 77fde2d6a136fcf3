//! Initialization-time accounting: kernel precompute, commutators and the
//! on-disk kernel cache.

use std::path::Path;
use std::time::Instant;

use magnus_core::coefficients::cache::{self, CacheKey};
use magnus_core::{ModelOperators, SchemeKernels, SchemeKind, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::archive::Setup;
use crate::config::BenchConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRow {
    pub scheme: SchemeKind,
    pub n_steps: usize,
    /// Seconds; minimum over the configured repeats.
    pub kernel_time: f64,
    pub commutator_time: f64,
    pub cache_store_time: f64,
    pub cache_load_time: f64,
    /// Whether the load returned kernels identical to the fresh ones.
    pub cache_hit: bool,
}

fn min_time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Times initialization for every scheme and step count, using `cache_dir`
/// for the store/load round trip.
pub fn run_init_report(config: &BenchConfig, cache_dir: &Path) -> Result<Vec<InitRow>> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let repeats = config.init_report.repeats;
    let commutator_time = min_time(repeats, || {
        ModelOperators::new(setup.model.drift().clone(), setup.model.controls().to_vec())?;
        Ok(())
    })?;
    let mut rows = Vec::new();
    for &scheme in &config.schemes {
        for &n in &config.init_report.step_counts {
            let grid = TimeGrid::new(config.ansatz.duration, n)?;
            let mut kernels = None;
            let kernel_time = min_time(repeats, || {
                kernels = Some(SchemeKernels::precompute(scheme, &setup.ansatz, &grid)?);
                Ok(())
            })?;
            let kernels = kernels.expect("at least one repeat");
            let key = CacheKey::new(&setup.ansatz, &grid, scheme)?;
            let cache_store_time = min_time(repeats, || {
                cache::store(cache_dir, &key, &kernels)?;
                Ok(())
            })?;
            let mut loaded = None;
            let cache_load_time = min_time(repeats, || {
                loaded = cache::load::<f64>(cache_dir, &key)?;
                Ok(())
            })?;
            rows.push(InitRow {
                scheme,
                n_steps: n,
                kernel_time,
                commutator_time,
                cache_store_time,
                cache_load_time,
                cache_hit: loaded.as_ref() == Some(&kernels),
            });
        }
    }
    Ok(rows)
}
