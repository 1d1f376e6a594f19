//! Batch experiments: config files, runs with oracle checks, records and
//! their CSV, JSON and gnuplot exports, and the named verification suites.

mod config;
mod record;
mod runner;
pub mod suites;

pub use config::{parse_seeds, Density, ExperimentConfig, ExperimentPoint, ModelKind};
pub use record::{
    append_jsonl, read_json, read_jsonl, silent_failures, write_csv, write_gnuplot, write_json, ExperimentRecord,
    CSV_COLUMNS,
};
pub use runner::{point_graph, quick_point, run_experiment, run_point};
pub use suites::{verify_suite, SuiteReport, SUITES};

/// Environment variable naming the output directory of the command-line tool.
pub const OUT_DIR_ENV: &str = "CMST_OUT_DIR";
