//! Configuration files and experiment drivers behind the `subwave` binary.

pub mod config;
pub mod experiment;

pub use config::{emit_config, parse_config, parse_config_str, ConfigError};
pub use experiment::{run_experiment, run_with_threads, ExperimentError, ExperimentKind, ExperimentResult};
