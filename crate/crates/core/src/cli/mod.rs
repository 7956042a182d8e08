//! Config-driven suite runs and their reports.

pub mod config;
pub mod emit;
pub mod suite;

pub use config::{parse_config, parse_config_str, ConfigError, Format, RunPlan};
pub use emit::{emit_report, plot_margins, read_report};
pub use suite::{run_suite, SuiteReport, Summary};
