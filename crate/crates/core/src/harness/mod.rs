//! Experiment harness: JSON configs, seeded runs with JSON-lines logs,
//! action-value dumps and oracle cross-checks.

pub mod builtins;
pub mod commands;
pub mod config;
pub mod log;
pub mod oracle;

pub use commands::{
    check_summary, evaluate_command, oracle_command, run_command, write_run, CommandError, RunOutput,
};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, RunSettings, Violation};
pub use oracle::{OracleOptions, OracleReport};
