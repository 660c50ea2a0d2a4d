//! Experiment configuration, sweeps, validation and output.

pub mod config;
pub mod emit;
pub mod minimize;
pub mod oracles;
pub mod sweep;
pub mod validate;

pub use config::{DataSpec, ExperimentConfig, LambdaPolicy, Metric};
pub use sweep::{run_sweep, run_sweep_with_threads, SweepRecord};
