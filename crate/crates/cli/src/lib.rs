//! Library behind the `deco` binary: experiment configs, data sources, the
//! replication runner and design diagnostics.

pub mod config;
pub mod data;
pub mod diag;
pub mod experiment;

pub use config::{CsvSource, ExperimentConfig};
pub use experiment::{run_experiment, summary_table, write_results, ExperimentOutput};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const ALL_FAILED: i32 = 2;
    pub const PARTIAL: i32 = 3;
}
