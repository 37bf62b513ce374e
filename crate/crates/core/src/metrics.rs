//! Fairness and accuracy measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;

/// `|P(pred = 1 | s = 1) − P(pred = 1 | s = 0)|`.
pub fn statistical_disparity(pred: &[u8], s: &[u8]) -> Result<f64> {
    if pred.len() != s.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} group labels", pred.len(), s.len())));
    }
    let (mut pos, mut n1, mut pos0, mut n0) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(s) {
        if g == 1 {
            n1 += 1;
            pos += usize::from(p == 1);
        } else {
            n0 += 1;
            pos0 += usize::from(p == 1);
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateGroup(format!("{n1} protected and {n0} unprotected test rows")));
    }
    Ok((pos as f64 / n1 as f64 - pos0 as f64 / n0 as f64).abs())
}

/// Fraction of mismatched labels (0 for empty input).
pub fn classification_error(pred: &[u8], y: &[u8]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} labels", pred.len(), y.len())));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let wrong = pred.iter().zip(y).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Squared distance between the mean embedded row of the first `n_u` rows and
/// that of the rest.
pub fn mean_discrepancy_embedded<T: Real>(x_fs: &Matrix<T>, n_u: usize) -> Result<T> {
    let n = x_fs.rows();
    if n_u == 0 || n_u >= n {
        return Err(Error::DegenerateGroup(format!("split at {n_u} of {n} rows")));
    }
    let nu = T::of_usize(n_u);
    let np = T::of_usize(n - n_u);
    let mut total = T::zero();
    for j in 0..x_fs.cols() {
        let a = (0..n_u).map(|i| x_fs[(i, j)]).sum::<T>() / nu;
        let b = (n_u..n).map(|i| x_fs[(i, j)]).sum::<T>() / np;
        total += (a - b) * (a - b);
    }
    Ok(total)
}

/// Outcome of one train/test trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub sd: f64,
    pub error: f64,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sd_mean: f64,
    pub sd_std: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub count: usize,
    /// Set when only one report was aggregated; the stds are then reported as 0.
    pub std_undefined: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.iter().all(|&x| x == v[0]) {
        return (v[0], 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Mean and sample standard deviation of SD and error.
pub fn aggregate(reports: &[TrialReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no trial reports to aggregate".into()));
    }
    let sds: Vec<f64> = reports.iter().map(|r| r.sd).collect();
    let errs: Vec<f64> = reports.iter().map(|r| r.error).collect();
    let (sd_mean, sd_std) = mean_std(&sds);
    let (error_mean, error_std) = mean_std(&errs);
    Ok(Summary {
        sd_mean,
        sd_std,
        error_mean,
        error_std,
        count: reports.len(),
        std_undefined: reports.len() == 1,
    })
}
