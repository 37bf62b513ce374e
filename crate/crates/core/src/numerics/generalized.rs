use super::cholesky::{cholesky, Cholesky};
use super::eigen::{orient, sym_eigen, EigenPairs};
use super::matrix::{Matrix, SymMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solves `m·α = λ·(k_gram + jitter·I)·α` for all pairs.
///
/// With `k_gram + jitter·I = L·Lᵀ` the problem becomes the standard symmetric
/// problem `L⁻¹·m·L⁻ᵀ·β = λ·β`, and `α = L⁻ᵀ·β`. Returned vectors are therefore
/// orthonormal in the `(k_gram + jitter·I)` inner product; they are oriented
/// with [`orient`] and sorted by ascending `λ`.
pub fn generalized_eigen<T: Real>(
    m: &SymMatrix<T>,
    k_gram: &SymMatrix<T>,
    jitter: T,
) -> Result<EigenPairs<T>> {
    if m.dim() != k_gram.dim() {
        return Err(Error::DimensionMismatch(format!(
            "objective is {0}x{0} but Gram matrix is {1}x{1}",
            m.dim(),
            k_gram.dim()
        )));
    }
    let chol = cholesky(k_gram, jitter)?;
    generalized_eigen_with(m, &chol)
}

/// Same as [`generalized_eigen`] with an existing factorization of the metric.
pub fn generalized_eigen_with<T: Real>(m: &SymMatrix<T>, chol: &Cholesky<T>) -> Result<EigenPairs<T>> {
    let n = m.dim();
    if chol.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "objective is {n}x{n} but factor is {0}x{0}",
            chol.dim()
        )));
    }
    let reduced = reduce(m, chol);
    let ep = sym_eigen(&reduced)?;

    let mut vectors = Matrix::zeros(n, n);
    for j in 0..n {
        let mut alpha = ep.vector(j);
        chol.solve_upper_in_place(&mut alpha);
        orient(&mut alpha);
        vectors.set_column(j, &alpha);
    }
    Ok(EigenPairs {
        values: ep.values,
        vectors,
    })
}

/// `L⁻¹·m·L⁻ᵀ`, symmetrized.
fn reduce<T: Real>(m: &SymMatrix<T>, chol: &Cholesky<T>) -> SymMatrix<T> {
    let n = m.dim();
    // rows of `xt` are the columns of X = L⁻¹·m (m is symmetric, so row j of m is column j)
    let mut xt = Matrix::zeros(n, n);
    for j in 0..n {
        let row = xt.row_mut(j);
        row.copy_from_slice(m.row(j));
        chol.solve_lower_in_place(row);
    }
    // column j of L⁻¹·Xᵀ is L⁻¹ applied to row j of X
    let mut c = xt.transpose();
    for j in 0..n {
        chol.solve_lower_in_place(c.row_mut(j));
    }
    SymMatrix::symmetrize(c).expect("reduced matrix is square and finite")
}
