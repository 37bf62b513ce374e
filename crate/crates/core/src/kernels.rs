//! Kernel functions and Gram matrix assembly.
//!
//! Training rows are expected in group order: the `n_u` unprotected instances
//! first, then the protected ones. [`GramView`] records that split so the
//! embedding objective can address the row blocks `K_u` and `K_p`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SymMatrix};
use crate::scalar::{dot, Real};

/// Kernel family and hyperparameters.
///
/// * `Linear`: `xᵀz`
/// * `Polynomial`: `(xᵀz + coef)^degree`
/// * `Sigmoid`: `tanh(gain·xᵀz + coef)`; not positive semidefinite in general
/// * `Rbf`: `exp(−gain·‖x − z‖²)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub enum KernelSpec<T> {
    Linear,
    Polynomial { degree: u32, coef: T },
    Sigmoid { gain: T, coef: T },
    Rbf { gain: T },
}

impl<T: Real> KernelSpec<T> {
    pub fn polynomial(degree: u32, coef: T) -> Self {
        KernelSpec::Polynomial { degree, coef }
    }

    /// Sigmoid kernel with `gain = 1/dim` and `coef = 0.01`.
    pub fn sigmoid_default(dim: usize) -> Self {
        KernelSpec::Sigmoid {
            gain: T::one() / T::of_usize(dim.max(1)),
            coef: T::of(0.01),
        }
    }

    pub fn rbf(gain: T) -> Self {
        KernelSpec::Rbf { gain }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Sigmoid { .. } => "sigmoid",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { degree, coef } => {
                if degree < 1 {
                    return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
                }
                if !coef.is_finite() {
                    return Err(Error::InvalidArgument("polynomial coef must be finite".into()));
                }
            }
            KernelSpec::Sigmoid { gain, coef } => {
                if !(gain > T::zero()) || !gain.is_finite() || !coef.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "sigmoid needs finite gain > 0 and finite coef, got gain {gain} coef {coef}"
                    )));
                }
            }
            KernelSpec::Rbf { gain } => {
                if !(gain > T::zero()) || !gain.is_finite() {
                    return Err(Error::InvalidArgument(format!("rbf gain must be > 0, got {gain}")));
                }
            }
            KernelSpec::Linear => {}
        }
        Ok(())
    }

    /// Whether Gram matrices of this kernel are positive semidefinite.
    pub fn is_psd(&self) -> bool {
        !matches!(self, KernelSpec::Sigmoid { .. })
    }

    #[inline]
    fn apply(&self, x: &[T], z: &[T]) -> T {
        match *self {
            KernelSpec::Linear => dot(x, z),
            KernelSpec::Polynomial { degree, coef } => {
                let base = dot(x, z) + coef;
                base.powi(degree as i32)
            }
            KernelSpec::Sigmoid { gain, coef } => (gain * dot(x, z) + coef).tanh(),
            KernelSpec::Rbf { gain } => {
                let d2 = x
                    .iter()
                    .zip(z)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>();
                (-gain * d2).exp()
            }
        }
    }

    pub fn cast<U: Real>(&self) -> KernelSpec<U> {
        match *self {
            KernelSpec::Linear => KernelSpec::Linear,
            KernelSpec::Polynomial { degree, coef } => KernelSpec::Polynomial {
                degree,
                coef: U::of(coef.to_f64_lossy()),
            },
            KernelSpec::Sigmoid { gain, coef } => KernelSpec::Sigmoid {
                gain: U::of(gain.to_f64_lossy()),
                coef: U::of(coef.to_f64_lossy()),
            },
            KernelSpec::Rbf { gain } => KernelSpec::Rbf {
                gain: U::of(gain.to_f64_lossy()),
            },
        }
    }
}

/// Evaluates `k(x, z)`.
pub fn kernel_eval<T: Real>(spec: &KernelSpec<T>, x: &[T], z: &[T]) -> Result<T> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            z.len()
        )));
    }
    Ok(spec.apply(x, z))
}

/// Gram matrix of ordered training data with its group split.
#[derive(Clone, Debug, PartialEq)]
pub struct GramView<T: Real> {
    pub full: SymMatrix<T>,
    n_u: usize,
}

impl<T: Real> GramView<T> {
    pub fn new(full: SymMatrix<T>, n_u: usize) -> Result<Self> {
        if n_u > full.dim() {
            return Err(Error::InvalidArgument(format!(
                "{n_u} unprotected rows in a {}x{} Gram matrix",
                full.dim(),
                full.dim()
            )));
        }
        Ok(GramView { full, n_u })
    }

    pub fn n(&self) -> usize {
        self.full.dim()
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_p(&self) -> usize {
        self.n() - self.n_u
    }

    pub fn rows_u(&self) -> Range<usize> {
        0..self.n_u
    }

    pub fn rows_p(&self) -> Range<usize> {
        self.n_u..self.n()
    }
}

/// Gram matrix of `data` (one instance per row) whose first `n_u` rows are the
/// unprotected group.
pub fn gram<T: Real>(spec: &KernelSpec<T>, data: &Matrix<T>, n_u: usize) -> Result<GramView<T>> {
    spec.validate()?;
    let n = data.rows();
    if n_u > n {
        return Err(Error::InvalidArgument(format!(
            "split {n_u} exceeds {n} rows"
        )));
    }
    let full = SymMatrix::from_upper(n, |i, j| spec.apply(data.row(i), data.row(j))).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite(format!(
            "{} kernel Gram matrix overflowed or produced NaN",
            spec.family_name()
        )),
        other => other,
    })?;
    GramView::new(full, n_u)
}

/// Kernel rows for test points: entry `[t][i] = k(test_t, train_i)`.
pub fn cross_gram<T: Real>(spec: &KernelSpec<T>, train: &Matrix<T>, test: &Matrix<T>) -> Result<Matrix<T>> {
    spec.validate()?;
    if train.cols() != test.cols() {
        return Err(Error::DimensionMismatch(format!(
            "training data has {} features, test data has {}",
            train.cols(),
            test.cols()
        )));
    }
    let out = Matrix::from_fn(test.rows(), train.rows(), |t, i| spec.apply(test.row(t), train.row(i)));
    if !out.is_finite() {
        return Err(Error::NonFinite(format!(
            "{} kernel evaluation on test data",
            spec.family_name()
        )));
    }
    Ok(out)
}
