//! Experiment runner, baselines, analyses and reports.

mod analysis;
mod config;
mod report;
mod runner;

pub use analysis::{
    ablation_removal_curve, analysis_model, sample_skewness, skewness_analysis, skewness_over_training,
    train_and_measure_skewness, RemovalMode, Skewness, SkewnessReport,
};
pub use config::{DataKind, ExperimentConfig, Method, Scenario, TauKind};
pub use report::{emit_report, write_atomic, ReportFormat, RunReport, SeedFailure, SeedRun, Summary, REPORT_SCHEMA_VERSION};
pub use runner::{run_experiment, run_seed, task_heads, task_naive, task_network, task_nispa, task_stl};
