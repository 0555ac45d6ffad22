//! Front end for the drlq solvers: JSON experiment configs, the `solve`,
//! `learn`, `eval` and `sweep` commands, and the Monte Carlo harness.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_eval, cmd_learn, cmd_solve, cmd_sweep, evaluate, parse_lambda_grid, CliError, Controller,
    EvalSummary, SweepRow, TrialRow,
};
pub use config::{parse_config, parse_config_str, quadrotor_preset, ConfigError, ExperimentConfig};
