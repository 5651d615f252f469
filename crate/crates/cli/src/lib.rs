//! Config-driven front end for the `hilfer-lab` solver: hypothesis checks, solves,
//! stability experiments and operator convergence tables.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_check, cmd_solve, cmd_stability, cmd_verify_operators, load_config, parse_psi_name, Overrides};
pub use config::{parse_grid_list, ConfigError, ExperimentConfig, Format};
