//! Scenario files, contact matrices, metrics and run output.

pub mod config;
pub mod contact;
pub mod metrics;
pub mod output;

pub use config::{load_config, parse_config, ConfigFile, ScenarioConfig, WALLONIA_2020};
pub use contact::{load_contact_matrix, parse_contact_matrix};
pub use metrics::{compare, compute_metrics, ComparisonReport, ScenarioMetrics};
pub use output::{read_run, write_run};
