//! Experiment configuration, execution, CSV output and the theory checks.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{load_config, parse_config, to_toml, ConfigFile, ExperimentConfig};
pub use run::{er_constants_for, run_config, run_experiment, write_csv, write_results, MetricRow, CSV_HEADER};
pub use verify::{find_suite, suite_for_criterion, verify_theory, Check, Suite, SUITES};
