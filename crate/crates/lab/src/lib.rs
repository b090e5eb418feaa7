//! Experiment orchestration for the online LQR laboratory: reproducible
//! seeded sweeps over horizons and seeds, regret/estimation-error curve
//! emission, scaling-law fits, and the acceptance-suite runner.

pub mod acceptance;
pub mod config;
pub mod sweep;

pub use config::{Algorithm, ExperimentConfig, InstanceSpec, SeedSpec};
pub use sweep::{fit_scaling, run_sweep, RunStatus, ScalingFit, SweepResult, SweepRow};
