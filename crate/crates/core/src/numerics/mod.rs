//! Dense symmetric linear algebra: Cholesky, symmetric and generalized
//! eigenproblems, SPD solves, and a Lanczos solver for a few extremal pairs.

mod cholesky;
mod eigen;
mod generalized;
mod lanczos;
mod matrix;
#[cfg(test)]
pub(crate) mod testutil;

pub use cholesky::{cholesky, solve_spd, Cholesky};
pub use eigen::{orient, sym_eigen, EigenPairs};
pub use generalized::{generalized_eigen, generalized_eigen_with};
pub use lanczos::{top_eigen, LanczosOptions, TopEigen};
pub use matrix::{Matrix, SymMatrix};

use crate::scalar::Real;

/// Diagonal regularization for a Gram matrix: `scale · trace(K) / n`.
///
/// Falls back to `scale` when the trace is not positive.
pub fn default_jitter<T: Real>(k: &SymMatrix<T>, scale: T) -> T {
    let n = k.dim();
    if n == 0 {
        return scale;
    }
    let t = k.trace() / T::of_usize(n);
    if t > T::zero() && t.is_finite() {
        scale * t
    } else {
        scale
    }
}
