//! Experiment driver behind the `qfedfisher` binary.

mod checks;
pub mod config;
pub mod experiment;

pub use crate::seed::{derive_seed, Purpose};
pub use checks::{run_oracle_checks, OracleCheck};
pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig, FlagOverrides};
pub use experiment::{run_experiment, ExperimentSummary, RunError, StrategyRun};
