//! Experiment runner for the lcusim simulator: config validation, seeded
//! execution of the experiment suites, and flat-file output.

pub mod config;
pub mod run;

pub use config::{validate_config, Command, ConfigErrors, ExperimentConfig};
pub use run::{emit_outputs, run, ResultRecord, RunError, RunOutput};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}
