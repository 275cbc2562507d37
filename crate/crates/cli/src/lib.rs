//! Batch front end for the Kirchhoff-Plateau solvers.

pub mod config;
pub mod export;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigErrors, Mode, RunConfig};
pub use run::{run, RunError, RunOutcome, EXIT_CONVERGED, EXIT_INPUT, EXIT_NOT_CONVERGED};
