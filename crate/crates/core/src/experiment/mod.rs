//! Cross-validated experiments, grid search and ablations, with their
//! on-disk reports.

mod config;
mod harness;
mod report;

pub use config::{ExperimentConfig, CONFIG_VERSION};
pub use harness::{
    fold_seed, init_thread_pool_from_env, run_ablation_suite, run_experiment, run_fold, run_folds,
    run_grid, FoldFailure, FoldOutcome, Protocol, THREADS_ENV,
};
pub use report::{
    ablation_csv, ablation_folds_csv, experiment_csv, grid_csv, AblationReport, AblationRow, DatasetInfo,
    ExperimentReport, FoldResult, GridPoint, GridReport, Outcome, REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};
