//! Benchmark harness for the Magnus propagation schemes on the spin-chain
//! state-transfer problem.
//!
//! The stages run in order and communicate through the run directory:
//! [`archive::run_seed_stage`] writes the pulse archive, [`scan::run_dt_scan`]
//! evaluates it over a range of steps and picks `dt*` per scheme, and
//! [`race::run_race`] re-optimizes the archive at those steps.
//! [`init::run_init_report`] and [`gradcheck::run_gradcheck`] are standalone.

pub mod archive;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod output;
pub mod race;
pub mod run;
pub mod scan;

pub use archive::{run_seed_stage, ArchiveEntry, PulseArchive};
pub use config::{BenchConfig, PulseSet};
pub use error::{BenchError, Result};
pub use race::{run_race, RaceResult};
pub use scan::{run_dt_scan, ScanResult};
