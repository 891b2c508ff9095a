//! Repeated-trial benchmarking: experiment execution, Welch statistics and
//! comparison reports.

pub mod experiment;
pub mod report;
pub mod stats;

pub use experiment::{
    load_trials, run_experiment, run_trial, write_trials, DatasetSpec, ExperimentConfig,
    RunOptions, TrialResult, TrialSeeds,
};
pub use report::{build_report, ComparisonReport};
pub use stats::{significance_stars, welch_t_test, TTest};
