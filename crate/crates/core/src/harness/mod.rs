//! Experiment protocol: repeated random splits over a hyperparameter grid.
//!
//! Trial `t` always uses the seed `derive_seed(config.seed, t)`, whatever grid
//! point it belongs to, so all grid points see the same splits and adding a
//! point never changes the others. Results are merged in (point, trial) order,
//! which makes every emitted byte a function of the config alone.

mod config;
mod output;
mod run;

pub use config::{config_document, overlay, DatasetSource, ExperimentConfig, KRule, KernelChoice, Method};
pub use output::{
    emit_results, manifest_json, results_csv, sweep_csv, trials_csv, SweepAxis, MANIFEST_FILE, MANIFEST_FORMAT,
    RESULTS_COLUMNS, RESULTS_FILE, SWEEP_FILE, TRIALS_COLUMNS, TRIALS_FILE,
};
pub use run::{
    grid_points, run_experiment, run_experiment_on, run_trial, run_trial_with_seed, train_size, trial_seed,
    ExperimentReport, GridPoint, PointResult, TrialOutcome, MAX_FAILED_FRACTION, SELECTION_RULE,
};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "FKRF2E_OUT_DIR";
