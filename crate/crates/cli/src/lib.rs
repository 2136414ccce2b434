//! Config parsing, seed sweeps and CSV output for the `rkan` binary.

pub mod config;
pub mod replicate;
pub mod runner;

pub use config::{parse_config, parse_seeds, ConfigError, ExperimentConfig, ExperimentKind};
pub use runner::{read_csv, run, summary, write_csv, ResultRow};
