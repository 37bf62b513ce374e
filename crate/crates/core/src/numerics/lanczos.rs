use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eigen::sym_eigen;
use super::matrix::SymMatrix;
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Real};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions<T> {
    /// Ritz pairs are accepted once `‖A·u − θ·u‖ ≤ tol · max|θ|`.
    pub tol: T,
    /// Seed of the start vector.
    pub seed: u64,
}

impl<T: Real> Default for LanczosOptions<T> {
    fn default() -> Self {
        LanczosOptions {
            tol: T::epsilon().sqrt() * T::of(1e-4),
            seed: 0x5eed,
        }
    }
}

/// Largest eigenpairs in descending order of eigenvalue.
#[derive(Clone, Debug)]
pub struct TopEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    /// Residual bound of each Ritz pair as estimated by the recurrence.
    pub residuals: Vec<T>,
}

/// `k` largest eigenpairs of the symmetric operator `apply` restricted to the
/// orthogonal complement of `deflate` (which must be orthonormal).
///
/// Lanczos with full reorthogonalization. The Krylov space grows until the
/// wanted Ritz pairs converge or it spans the whole complement, at which point
/// the result is exact up to rounding.
pub fn top_eigen<T: Real>(
    n: usize,
    k: usize,
    mut apply: impl FnMut(&[T]) -> Vec<T>,
    deflate: &[Vec<T>],
    opts: LanczosOptions<T>,
) -> Result<TopEigen<T>> {
    let space = n.saturating_sub(deflate.len());
    if k > space {
        return Err(Error::InvalidArgument(format!(
            "asked for {k} eigenpairs of an operator on a {space}-dimensional space"
        )));
    }
    if k == 0 {
        return Ok(TopEigen {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alpha: Vec<T> = Vec::new();
    // beta[j] couples basis[j] and basis[j + 1]
    let mut beta: Vec<T> = Vec::new();
    let mut scale = T::zero();

    let mut next = fresh_direction(&mut rng, n, deflate, &basis)
        .ok_or_else(|| Error::InvalidArgument("operator space is empty".into()))?;
    let mut target = space.min((2 * k + 20).max(40));

    loop {
        while basis.len() < target {
            let q = next.clone();
            let mut w = apply(&q);
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "operator returned {} entries, expected {n}",
                    w.len()
                )));
            }
            project_out(&mut w, deflate);
            let a = dot(&q, &w);
            axpy(-a, &q, &mut w);
            if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
                axpy(-b, prev, &mut w);
            }
            basis.push(q);
            alpha.push(a);
            // twice is enough
            for _ in 0..2 {
                project_out(&mut w, deflate);
                project_out(&mut w, &basis);
            }
            let b = norm2(&w);
            scale = scale.max(a.abs()).max(b);
            if basis.len() == space {
                beta.push(b);
                break;
            }
            if b <= T::of(1e3) * T::epsilon() * scale.max(T::min_positive_value()) {
                // invariant subspace found: restart in a new direction
                beta.push(T::zero());
                match fresh_direction(&mut rng, n, deflate, &basis) {
                    Some(v) => next = v,
                    None => break,
                }
            } else {
                beta.push(b);
                next = w.iter().map(|&x| x / b).collect();
            }
        }

        let m = basis.len();
        let tri = SymMatrix::from_upper(m, |i, j| {
            if i == j {
                alpha[i]
            } else if j == i + 1 {
                beta[i]
            } else {
                T::zero()
            }
        })?;
        let ritz = sym_eigen(&tri)?;
        let tail = if m == space { T::zero() } else { beta[m - 1] };
        let theta_max = ritz
            .values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
            .max(T::min_positive_value());
        let wanted: Vec<usize> = (m - k..m).rev().collect();
        let residuals: Vec<T> = wanted
            .iter()
            .map(|&i| (tail * ritz.vectors[(m - 1, i)]).abs())
            .collect();
        let converged = residuals.iter().all(|&r| r <= opts.tol * theta_max);

        if converged || m >= space {
            let mut vectors = Vec::with_capacity(k);
            for &i in &wanted {
                let mut u = vec![T::zero(); n];
                for (j, q) in basis.iter().enumerate() {
                    axpy(ritz.vectors[(j, i)], q, &mut u);
                }
                let nu = norm2(&u);
                u.iter_mut().for_each(|x| *x /= nu);
                vectors.push(u);
            }
            return Ok(TopEigen {
                values: wanted.iter().map(|&i| ritz.values[i]).collect(),
                vectors,
                residuals,
            });
        }
        target = space.min(2 * target);
    }
}

fn project_out<T: Real>(w: &mut [T], against: &[Vec<T>]) {
    for q in against {
        let c = dot(q, w);
        axpy(-c, q, w);
    }
}

fn fresh_direction<T: Real>(
    rng: &mut ChaCha8Rng,
    n: usize,
    deflate: &[Vec<T>],
    basis: &[Vec<T>],
) -> Option<Vec<T>> {
    for _ in 0..8 {
        let mut v: Vec<T> = (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
        let before = norm2(&v);
        for _ in 0..2 {
            project_out(&mut v, deflate);
            project_out(&mut v, basis);
        }
        let after = norm2(&v);
        if after > T::of(1e-6) * before {
            v.iter_mut().for_each(|x| *x /= after);
            return Some(v);
        }
    }
    None
}
