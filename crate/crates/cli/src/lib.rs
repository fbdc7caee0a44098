//! Library surface of the experiment runner, shared by the binary, the
//! integration tests, and the acceptance suite.

pub mod commands;
pub mod config;
pub mod fitting;
pub mod outputs;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, ValidateMode};
pub use fitting::{fit_cost_exponent, Fit};
pub use runner::{
    block_band, block_target_load, build_allocator, default_workload, run_cell, run_named_cell,
    AllocParams, RunError, RunSummary,
};
