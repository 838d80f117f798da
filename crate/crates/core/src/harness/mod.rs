//! Policy-evaluation experiments comparing KOVA with an SGD baseline on
//! exactly solvable MDPs, plus the `kova` command line.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, RawConfig};
pub use metrics::{emit_csv, format_csv, parse_csv, MetricsRow, CSV_HEADER};
pub use run::{run_experiment, RunFailure};
