//! Configuration, file formats and commands for the `nlc2d` driver.
//!
//! Exit codes of the binary: 0 success, 1 I/O failure, 2 configuration or
//! usage error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod plot;
pub mod report;
pub mod series;
pub mod snapshot;

pub use commands::CliError;
pub use config::{ConfigError, RunConfig};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotError};
