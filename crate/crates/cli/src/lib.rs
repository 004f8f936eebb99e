//! Library side of the `baas-sim` command: config parsing, the `run` and
//! `compare` pipelines, and the comparison chart.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{
    compare_command, parse_policy_list, run_command, simulate, CliError, CompareSummary, PolicyRun,
    RunSummary,
};
pub use config::{load_config, parse_config, ConfigError, SimConfig, WorkloadSource};
