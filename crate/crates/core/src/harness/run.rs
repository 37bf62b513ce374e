use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, KRule, KernelChoice, Method};
use crate::data::{derive_seed, split, standardize, Dataset};
use crate::embedding::{EmbeddingModel, EmbeddingOptions};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, classification_error, statistical_disparity, Summary, TrialReport};
use crate::regression::{fit_fkrr, FairRegressor};

/// A grid point is failed when more than this fraction of its trials fail.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// One point of the hyperparameter grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub method: Method,
    pub kernel: KernelChoice,
    pub k_rule: Option<KRule>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
}

/// Cartesian product of the config grids, kernels outermost.
pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &kernel in &cfg.kernels {
        match cfg.method {
            Method::Fkrf2e => {
                for &k_rule in &cfg.k_rules {
                    for &gamma in &cfg.ridge_gammas {
                        out.push(GridPoint {
                            index: out.len(),
                            method: cfg.method,
                            kernel,
                            k_rule: Some(k_rule),
                            gamma: Some(gamma),
                            mu: None,
                            lambda: None,
                        });
                    }
                }
            }
            Method::Fkrr => {
                for &mu in &cfg.fkrr_mus {
                    for &lambda in &cfg.fkrr_lambdas {
                        out.push(GridPoint {
                            index: out.len(),
                            method: cfg.method,
                            kernel,
                            k_rule: None,
                            gamma: None,
                            mu: Some(mu),
                            lambda: Some(lambda),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Training-set size produced by [`split`] on `n` rows.
pub fn train_size(n: usize, test_fraction: f64) -> usize {
    n - (n as f64 * test_fraction).floor() as usize
}

/// Seed of trial `index`; independent of the grid point.
pub fn trial_seed(cfg: &ExperimentConfig, index: usize) -> u64 {
    derive_seed(cfg.seed, index as u64)
}

/// Split, standardize, fit and score one trial drawn with `seed`.
pub fn run_trial_with_seed(cfg: &ExperimentConfig, point: &GridPoint, ds: &Dataset<f64>, seed: u64) -> Result<TrialReport> {
    let (train, test) = split(ds, cfg.test_fraction, seed)?;
    let (train, test) = if cfg.standardize {
        let (a, b, _) = standardize(&train, &test)?;
        (a, b)
    } else {
        (train, test)
    };
    let spec = point.kernel.resolve(train.dim());
    let y = train.targets();
    let pred = match point.method {
        Method::Fkrf2e => {
            let k = point.k_rule.unwrap_or_default().resolve(train.n());
            let opts = EmbeddingOptions::new(k).mode(cfg.md_mode);
            let (embedding, g) = EmbeddingModel::fit(&train.features, train.n_u, spec, &opts)?;
            let x_fs = embedding.project_train(&g)?;
            let model = FairRegressor::fit(embedding, &x_fs, &y, point.gamma.unwrap_or(1.0), cfg.ridge_intercept)?
                .with_threshold(cfg.threshold);
            model.classify(&test.features)?
        }
        Method::Fkrr => {
            let mut model = fit_fkrr(
                &train.features,
                &train.sensitive(),
                &y,
                spec,
                point.mu.unwrap_or(1.0),
                point.lambda.unwrap_or(1.0),
            )?;
            model.threshold = cfg.threshold;
            model.classify(&test.features)?
        }
    };
    Ok(TrialReport {
        sd: statistical_disparity(&pred, &test.s)?,
        error: classification_error(&pred, &test.y)?,
        n_test: test.n(),
        seed,
    })
}

/// Runs trial `index` at `point`.
pub fn run_trial(cfg: &ExperimentConfig, point: &GridPoint, ds: &Dataset<f64>, index: usize) -> Result<TrialReport> {
    run_trial_with_seed(cfg, point, ds, trial_seed(cfg, index)).map_err(|e| Error::Trial {
        trial: index,
        source: Box::new(e),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub point: usize,
    pub trial: usize,
    /// Seed of the draw that produced `report` (or of the last failed draw).
    pub seed: u64,
    pub attempts: usize,
    pub report: Option<TrialReport>,
    pub message: Option<String>,
}

/// Runs a trial, retrying once with a derived seed.
fn run_with_retry(cfg: &ExperimentConfig, point: &GridPoint, ds: &Dataset<f64>, trial: usize) -> TrialOutcome {
    let first = trial_seed(cfg, trial);
    let retry = derive_seed(first, 1);
    let mut message = None;
    for (attempt, seed) in [first, retry].into_iter().enumerate() {
        match run_trial_with_seed(cfg, point, ds, seed) {
            Ok(report) => {
                return TrialOutcome {
                    point: point.index,
                    trial,
                    seed,
                    attempts: attempt + 1,
                    report: Some(report),
                    message,
                }
            }
            Err(e) => {
                log::warn!("point {} trial {trial} attempt {}: {e}", point.index, attempt + 1);
                message = Some(e.to_string());
            }
        }
    }
    TrialOutcome {
        point: point.index,
        trial,
        seed: retry,
        attempts: 2,
        report: None,
        message,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    /// Resolved number of embedding directions (FKR-F²E only).
    pub k: Option<usize>,
    pub summary: Option<Summary>,
    pub n_failed: usize,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub points: Vec<PointResult>,
    pub trials: Vec<TrialOutcome>,
    /// Index of the valid point with the lowest mean SD (ties: lowest error).
    pub best: Option<usize>,
    pub n: usize,
    pub n_u: usize,
    pub dim: usize,
    pub source: String,
    pub schema_hash: String,
}

pub const SELECTION_RULE: &str = "lowest sd_mean among valid points; ties broken by lowest error_mean, then grid order";

/// Loads the dataset and runs every grid point for `cfg.trials` trials.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    run_experiment_on(cfg, &ds)
}

/// Like [`run_experiment`] on an already loaded dataset.
pub fn run_experiment_on(cfg: &ExperimentConfig, ds: &Dataset<f64>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let points = grid_points(cfg);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    // indexed parallel collect keeps (point, trial) order
    let trials: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(p, t)| run_with_retry(cfg, &points[p], ds, t))
        .collect();

    let n_train = train_size(ds.n(), cfg.test_fraction);
    let mut results = Vec::with_capacity(points.len());
    for (p, point) in points.iter().enumerate() {
        let outcomes = &trials[p * cfg.trials..(p + 1) * cfg.trials];
        let reports: Vec<TrialReport> = outcomes.iter().filter_map(|o| o.report).collect();
        let n_failed = outcomes.len() - reports.len();
        let valid = (n_failed as f64) <= MAX_FAILED_FRACTION * cfg.trials as f64 && !reports.is_empty();
        results.push(PointResult {
            point: *point,
            k: point.k_rule.map(|r| r.resolve(n_train)),
            summary: if reports.is_empty() { None } else { Some(aggregate(&reports)?) },
            n_failed,
            valid,
        });
    }
    let best = results
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| r.summary.map(|s| (r.point.index, s)))
        .min_by(|a, b| {
            a.1.sd_mean
                .total_cmp(&b.1.sd_mean)
                .then(a.1.error_mean.total_cmp(&b.1.error_mean))
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i);
    Ok(ExperimentReport {
        config: cfg.clone(),
        points: results,
        trials,
        best,
        n: ds.n(),
        n_u: ds.n_u,
        dim: ds.dim(),
        source: ds.provenance.source.clone(),
        schema_hash: ds.provenance.schema_hash.clone(),
    })
}
