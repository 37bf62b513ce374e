use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, SymMatrix};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Real};

/// Lower triangular factor `L` of `a + jitter·I = L·Lᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Cholesky<T: Real> {
    l: Matrix<T>,
}

/// Factors `a + jitter·I`.
///
/// Fails with [`Error::NotPositiveDefinite`] on the first pivot that is not
/// strictly positive; callers are expected to retry with a larger jitter.
pub fn cholesky<T: Real>(a: &SymMatrix<T>, jitter: T) -> Result<Cholesky<T>> {
    if jitter < T::zero() || !jitter.is_finite() {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {jitter}")));
    }
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            if i == j {
                s += jitter;
            }
            // rows i and j of L are both contiguous up to column j
            s -= dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > T::zero()) {
                    return Err(Error::NotPositiveDefinite {
                        row: i,
                        pivot: s.to_f64_lossy(),
                    });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(Cholesky { l })
}

impl<T: Real> Cholesky<T> {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn into_lower(self) -> Matrix<T> {
        self.l
    }

    /// Solves `L·x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        for i in 0..n {
            let row = self.l.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ·x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        for i in (0..n).rev() {
            let row = self.l.row(i);
            b[i] /= row[i];
            let xi = b[i];
            axpy(-xi, &row[..i], &mut b[..i]);
        }
    }

    /// Solves `(a + jitter·I)·x = b`.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `L·x`.
    pub fn lower_mul(&self, x: &[T]) -> Vec<T> {
        (0..self.dim())
            .map(|i| dot(&self.l.row(i)[..=i], &x[..=i]))
            .collect()
    }

    /// `Lᵀ·x`.
    pub fn upper_mul(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, &self.l.row(i)[..=i], &mut out[..=i]);
        }
        out
    }

    /// `L·Lᵀ`, mostly useful for checking a factorization.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            let m = i.min(j) + 1;
            dot(&self.l.row(i)[..m], &self.l.row(j)[..m])
        })
    }
}

/// Solves `a·x = rhs` column by column for symmetric positive definite `a`.
pub fn solve_spd<T: Real>(a: &SymMatrix<T>, rhs: &Matrix<T>) -> Result<Matrix<T>> {
    if rhs.rows() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} rows, matrix is {}x{}",
            rhs.rows(),
            a.dim(),
            a.dim()
        )));
    }
    let chol = cholesky(a, T::zero())?;
    let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
    for j in 0..rhs.cols() {
        let x = chol.solve_vec(&rhs.column(j));
        out.set_column(j, &x);
    }
    Ok(out)
}
