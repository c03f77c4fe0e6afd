//! Batch experiments for the coupled NLS laboratory: TOML configuration,
//! orchestration of runs, sweeps, bisection and ground-state scans, and
//! deterministic CSV/JSON output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{parse_config, parse_config_with, ExperimentConfig, ExperimentKind, Overrides};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, Experiment, Summary};
pub use output::emit_outputs;
