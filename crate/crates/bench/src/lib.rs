//! Benchmark driver: configuration, presets, runs and reports.

pub mod config;
pub mod presets;
pub mod report;
pub mod runner;

pub use config::{BenchConfig, ConfigError, RunSpec};
pub use report::{emit_report, BenchReport, Format, ReportError, RunReport, RunSummary};
pub use runner::{build_problem, run_benchmark};
