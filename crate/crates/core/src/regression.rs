//! Ridge regression on fair embeddings, thresholded classification, and the
//! fairness-penalized kernel ridge baseline.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::kernels::{cross_gram, gram, KernelSpec};
use crate::numerics::{cholesky, default_jitter, Matrix, SymMatrix};
use crate::persist::Persist;
use crate::scalar::{dot, Real};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Solves the symmetric positive (semi)definite system `a·x = b`, adding a
/// growing ridge only when the plain factorization fails.
fn solve_psd<T: Real>(a: &SymMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let mut jitter = T::zero();
    let base = default_jitter(a, T::of(1e-12));
    let mut last = None;
    for _ in 0..16 {
        match cholesky(a, jitter) {
            Ok(c) => return Ok(c.solve_vec(b)),
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                last = Some(e);
                jitter = if jitter == T::zero() { base } else { jitter * T::of(10.0) };
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn check_targets<T: Real>(rows: usize, y: &[T]) -> Result<()> {
    if rows != y.len() {
        return Err(Error::DimensionMismatch(format!("{rows} rows but {} targets", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression targets".into()));
    }
    Ok(())
}

/// Minimizes `‖X·β − y‖² + γ·‖β‖²` through the normal equations.
pub fn fit_ridge<T: Real>(x: &Matrix<T>, y: &[T], gamma: T) -> Result<Vec<T>> {
    check_targets(x.rows(), y)?;
    if gamma < T::zero() || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge gamma must be >= 0, got {gamma}")));
    }
    let mut normal = x.t_matmul(x)?;
    normal.add_diagonal(gamma);
    let rhs = x.t_matvec(y)?;
    solve_psd(&SymMatrix::symmetrize(normal)?, &rhs)
}

/// Same objective with an unpenalized intercept: returns `(β, b)` for
/// predictions `X·β + b`.
pub fn fit_ridge_with_intercept<T: Real>(x: &Matrix<T>, y: &[T], gamma: T) -> Result<(Vec<T>, T)> {
    check_targets(x.rows(), y)?;
    if x.rows() == 0 {
        return Err(Error::EmptyInput("ridge design has no rows".into()));
    }
    let n = T::of_usize(x.rows());
    let col_means: Vec<T> = (0..x.cols())
        .map(|j| x.row_iter().map(|r| r[j]).sum::<T>() / n)
        .collect();
    let y_mean = y.iter().copied().sum::<T>() / n;
    let xc = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - col_means[j]);
    let yc: Vec<T> = y.iter().map(|&v| v - y_mean).collect();
    let beta = fit_ridge(&xc, &yc, gamma)?;
    Ok((beta.clone(), y_mean - dot(&col_means, &beta)))
}

/// Label 1 iff `score >= threshold`.
pub fn classify<T: Real>(scores: &[T], threshold: T) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

/// Embedding plus linear read-out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct FairRegressor<T: Real> {
    pub embedding: EmbeddingModel<T>,
    pub beta: Vec<T>,
    #[serde(default)]
    pub intercept: T,
    pub ridge_gamma: T,
    pub threshold: T,
}

impl<T: Real> FairRegressor<T> {
    /// Fits the read-out on the embedded training set `x_fs`.
    pub fn fit(
        embedding: EmbeddingModel<T>,
        x_fs: &Matrix<T>,
        y: &[T],
        ridge_gamma: T,
        with_intercept: bool,
    ) -> Result<Self> {
        if x_fs.cols() != embedding.k() {
            return Err(Error::DimensionMismatch(format!(
                "embedded design has {} columns, embedding has {}",
                x_fs.cols(),
                embedding.k()
            )));
        }
        let (beta, intercept) = if with_intercept {
            fit_ridge_with_intercept(x_fs, y, ridge_gamma)?
        } else {
            (fit_ridge(x_fs, y, ridge_gamma)?, T::zero())
        };
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("ridge weights".into()));
        }
        Ok(FairRegressor {
            embedding,
            beta,
            intercept,
            ridge_gamma,
            threshold: T::of(DEFAULT_THRESHOLD),
        })
    }

    pub fn with_threshold(mut self, threshold: T) -> Self {
        self.threshold = threshold;
        self
    }

    /// Scores of already embedded rows.
    pub fn predict_embedded(&self, x_fs: &Matrix<T>) -> Result<Vec<T>> {
        let mut s = x_fs.matvec(&self.beta)?;
        s.iter_mut().for_each(|v| *v += self.intercept);
        Ok(s)
    }

    pub fn predict(&self, test_features: &Matrix<T>) -> Result<Vec<T>> {
        self.predict_embedded(&self.embedding.project_test(test_features)?)
    }

    pub fn classify(&self, test_features: &Matrix<T>) -> Result<Vec<u8>> {
        Ok(classify(&self.predict(test_features)?, self.threshold))
    }
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Persist for FairRegressor<T> {
    const FORMAT: &'static str = "fkrf2e-regressor/1";
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Persist for EmbeddingModel<T> {
    const FORMAT: &'static str = "fkrf2e-model/1";
}

/// Kernel ridge regression with a linear penalty on the covariance between
/// centered predictions and the centered sensitive attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct FkrrModel<T: Real> {
    pub train_features: Matrix<T>,
    pub spec: KernelSpec<T>,
    pub dual_coeffs: Vec<T>,
    pub mu: T,
    pub lambda: T,
    pub threshold: T,
}

/// Minimizes `‖K·c − y‖² + μ·(H·K·c)ᵀ·H·s + λ·cᵀK·c` over `c`, where `H`
/// centers over training rows.
pub fn fit_fkrr<T: Real>(
    features: &Matrix<T>,
    s: &[T],
    y: &[T],
    spec: KernelSpec<T>,
    mu: T,
    lambda: T,
) -> Result<FkrrModel<T>> {
    let n = features.rows();
    check_targets(n, y)?;
    if s.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} sensitive values", s.len())));
    }
    for (name, v) in [("mu", mu), ("lambda", lambda)] {
        if v < T::zero() || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
        }
    }
    let g = gram(&spec, features, n)?;
    let k = &g.full;
    let mut normal = k.matmul(k)?;
    for i in 0..n {
        for j in 0..n {
            normal[(i, j)] += lambda * k[(i, j)];
        }
    }
    let nn = T::of_usize(n.max(1));
    let s_mean = s.iter().copied().sum::<T>() / nn;
    let s_centered: Vec<T> = s.iter().map(|&v| v - s_mean).collect();
    let ky = k.matvec(y)?;
    let ks = k.matvec(&s_centered)?;
    let half_mu = mu / T::of(2.0);
    let rhs: Vec<T> = ky.iter().zip(&ks).map(|(&a, &b)| a - half_mu * b).collect();
    let dual_coeffs = solve_psd(&SymMatrix::symmetrize(normal)?, &rhs)?;
    if dual_coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("kernel ridge coefficients".into()));
    }
    Ok(FkrrModel {
        train_features: features.clone(),
        spec,
        dual_coeffs,
        mu,
        lambda,
        threshold: T::of(DEFAULT_THRESHOLD),
    })
}

impl<T: Real> FkrrModel<T> {
    pub fn predict(&self, test_features: &Matrix<T>) -> Result<Vec<T>> {
        cross_gram(&self.spec, &self.train_features, test_features)?.matvec(&self.dual_coeffs)
    }

    pub fn classify(&self, test_features: &Matrix<T>) -> Result<Vec<u8>> {
        Ok(classify(&self.predict(test_features)?, self.threshold))
    }
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Persist for FkrrModel<T> {
    const FORMAT: &'static str = "fkrr-model/1";
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingOptions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(x: &Matrix<f64>, y: &[f64], gamma: f64, beta: &[f64]) -> f64 {
        let r = x.matvec(beta).unwrap();
        r.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + gamma * beta.iter().map(|b| b * b).sum::<f64>()
    }

    #[test]
    fn identity_design() {
        let y = [0.3, -1.0, 2.0];
        assert_eq!(fit_ridge(&Matrix::identity(3), &y, 0.0).unwrap(), y.to_vec());
        let b = fit_ridge(&Matrix::<f64>::identity(2), &[1.0, 0.0], 1.0).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1] == 0.0);
    }

    #[test]
    fn ridge_is_a_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Matrix::from_fn(20, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..20).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let beta = fit_ridge(&x, &y, 0.1).unwrap();
        let best = objective(&x, &y, 0.1, &beta);
        for _ in 0..100 {
            let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let moved: Vec<f64> = beta.iter().zip(&d).map(|(b, v)| b + 1e-3 * v / norm).collect();
            assert!(best <= objective(&x, &y, 0.1, &moved));
        }
    }

    #[test]
    fn singular_design_without_shrinkage_still_solves() {
        let x = Matrix::<f64>::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        let beta = fit_ridge(&x, &[1.0, 2.0], 0.0).unwrap();
        let fitted = x.matvec(&beta).unwrap();
        assert!((fitted[0] - 1.0).abs() < 1e-6 && (fitted[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn intercept_recovers_offset() {
        let x = Matrix::<f64>::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let (beta, b) = fit_ridge_with_intercept(&x, &y, 0.0).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classify_rule() {
        assert_eq!(classify(&[0.4, 0.6], 0.5), vec![0, 1]);
        assert_eq!(classify(&[0.5], 0.5), vec![1]);
        assert_eq!(classify(&[-1.0, 0.1, 0.49], 0.5), vec![0, 0, 0]);
    }

    #[test]
    fn two_point_score() {
        let data = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (embedding, _) = EmbeddingModel::fit(&data, 1, KernelSpec::Linear, &EmbeddingOptions::new(1).jitter(0.0)).unwrap();
        let model = FairRegressor {
            embedding,
            beta: vec![2f64.sqrt()],
            intercept: 0.0,
            ridge_gamma: 0.0,
            threshold: 0.5,
        };
        let s = model.predict(&Matrix::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_and_train_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = Matrix::from_fn(16, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..16).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let (embedding, g) = EmbeddingModel::fit(&data, 7, KernelSpec::rbf(0.5), &EmbeddingOptions::new(3)).unwrap();
        let x_fs = embedding.project_train(&g).unwrap();
        let mut model = FairRegressor::fit(embedding, &x_fs, &y, 0.1, false).unwrap();
        let via_train = model.predict_embedded(&x_fs).unwrap();
        let via_test = model.predict(&data).unwrap();
        for (a, b) in via_train.iter().zip(&via_test) {
            assert!((a - b).abs() < 1e-10);
        }
        model.beta = vec![0.0; 3];
        assert!(model.predict(&data).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(model.predict(&Matrix::zeros(2, 5)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn fkrr_interpolates_without_penalties() {
        let data = Matrix::<f64>::from_rows(&[[0.0], [1.0], [2.5]]).unwrap();
        let y = [1.0, 0.0, 1.0];
        let m = fit_fkrr(&data, &[0.0, 1.0, 1.0], &y, KernelSpec::rbf(1.0), 0.0, 0.0).unwrap();
        for (p, t) in m.predict(&data).unwrap().iter().zip(&y) {
            assert!((p - t).abs() < 1e-8);
        }
    }

    #[test]
    fn fkrr_constant_group_ignores_mu() {
        let data = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [0.5, 0.5]]).unwrap();
        let y = [1.0, 0.0, 1.0, 0.0];
        let s = [1.0; 4];
        let a = fit_fkrr(&data, &s, &y, KernelSpec::polynomial(2, 1.0), 0.0, 1.0).unwrap();
        let b = fit_fkrr(&data, &s, &y, KernelSpec::polynomial(2, 1.0), 5.0, 1.0).unwrap();
        assert_eq!(a.dual_coeffs, b.dual_coeffs);
    }

    #[test]
    fn fkrr_penalty_lowers_group_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 30;
        let s: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 2 == 0))).collect();
        let data = Matrix::from_fn(n, 2, |i, j| s[i] * if j == 0 { 1.0 } else { 0.0 } + rng.gen_range(-0.5..0.5));
        let y = s.clone();
        let gap = |mu: f64| {
            let m = fit_fkrr(&data, &s, &y, KernelSpec::Linear, mu, 1.0).unwrap();
            let p = m.predict(&data).unwrap();
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                if s[i] == 1.0 { a += p[i] } else { b += p[i] }
            }
            (a - b) / (n as f64 / 2.0)
        };
        assert!(gap(10.0) < gap(0.0));
    }
}
