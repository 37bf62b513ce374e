//! Symmetric eigendecomposition.
//!
//! Householder tridiagonalization followed by the implicit QL method, after the
//! EISPACK routines `tred2`/`tql2` (by way of the public-domain JAMA port).

use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, SymMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// QL sweeps allowed per matrix dimension before giving up.
const SWEEPS_PER_DIM: usize = 30;

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
///
/// Each eigenvector is oriented so that its entry of largest magnitude is
/// positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct EigenPairs<T: Real> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> EigenPairs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> Vec<T> {
        self.vectors.column(j)
    }
}

/// Flips `v` so its largest-magnitude entry is positive. Near-ties (within a
/// few ulps) resolve to the lowest index.
pub fn orient<T: Real>(v: &mut [T]) {
    let max = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if max == T::zero() {
        return;
    }
    let cutoff = max * (T::one() - T::of(64.0) * T::epsilon());
    if let Some(lead) = v.iter().find(|x| x.abs() >= cutoff) {
        if *lead < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eigen<T: Real>(a: &SymMatrix<T>) -> Result<EigenPairs<T>> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v = a.as_matrix().clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    // QL rotations act on columns of V; work on Vᵀ so they touch contiguous rows
    let mut vt = v.transpose();
    tql2(&mut vt, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = vt.row(src).to_vec();
        orient(&mut vec);
        vectors.set_column(col, &vec);
    }
    Ok(EigenPairs { values, vectors })
}

fn tred2<T: Real>(v: &mut Matrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = T::zero();
            }

            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let sub = f * e[k] + g * d[k];
                    v[(k, j)] -= sub;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let sub = g * d[k];
                    v[(k, j)] -= sub;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL on the tridiagonal (d, e). `vt` holds the eigenvectors as rows.
fn tql2<T: Real>(vt: &mut Matrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let cap = SWEEPS_PER_DIM * n.max(1);
    let mut sweeps = 0usize;
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::of(2.0);

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            loop {
                sweeps += 1;
                if sweeps > cap {
                    return Err(Error::ConvergenceFailure { dim: n, cap });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[(l + 2)..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    rotate_rows(vt, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::ConvergenceFailure { dim: n, cap });
    }
    Ok(())
}

#[inline]
fn rotate_rows<T: Real>(vt: &mut Matrix<T>, i: usize, c: T, s: T) {
    let n = vt.cols();
    let (head, tail) = vt_rows_pair(vt, i, n);
    for (a, b) in head.iter_mut().zip(tail.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

fn vt_rows_pair<T: Real>(vt: &mut Matrix<T>, i: usize, n: usize) -> (&mut [T], &mut [T]) {
    let (lo, hi) = vt.as_mut_slice().split_at_mut((i + 1) * n);
    (&mut lo[i * n..], &mut hi[..n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::testutil::{random_sym, residual_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_contract(a: &SymMatrix<f64>, ep: &EigenPairs<f64>) {
        let n = a.dim();
        let fro = a.frobenius_norm();
        assert!(ep.values.windows(2).all(|w| w[0] <= w[1]));
        for j in 0..n {
            let v = ep.vector(j);
            let r = residual_norm(a.as_matrix(), &v, ep.values[j], None);
            assert!(r <= 1e-8 * (1.0 + ep.values[j].abs()) * fro.max(1.0), "residual {r}");
            for i in 0..n {
                let d: f64 = v.iter().zip(ep.vector(i)).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8);
            }
        }
        let tr: f64 = ep.values.iter().sum();
        assert!((tr - a.trace()).abs() <= 1e-8 * (1.0 + a.trace().abs()));
    }

    #[test]
    fn diagonal_matrix() {
        let a = SymMatrix::new(Matrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap()).unwrap();
        let ep = sym_eigen(&a).unwrap();
        assert_eq!(ep.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(ep.vector(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(ep.vector(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(ep.vector(2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = SymMatrix::new(Matrix::from_rows(&[[2.0f64, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
        let ep = sym_eigen(&a).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ep.values[0] - 1.0).abs() < 1e-14);
        assert!((ep.values[1] - 3.0).abs() < 1e-14);
        let v0 = ep.vector(0);
        let v1 = ep.vector(1);
        assert!((v0[0] - r).abs() < 1e-14 && (v0[1] + r).abs() < 1e-14, "{v0:?}");
        assert!((v1[0] - r).abs() < 1e-14 && (v1[1] - r).abs() < 1e-14, "{v1:?}");
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let ep = sym_eigen(&SymMatrix::<f64>::identity(6)).unwrap();
        assert!(ep.values.iter().all(|&v| v == 1.0));
        check_contract(&SymMatrix::identity(6), &ep);
    }

    #[test]
    fn trivial_sizes() {
        assert!(sym_eigen(&SymMatrix::<f64>::zeros(0)).unwrap().is_empty());
        let one = SymMatrix::new(Matrix::from_rows(&[[-4.5]]).unwrap()).unwrap();
        let ep = sym_eigen(&one).unwrap();
        assert_eq!(ep.values, vec![-4.5]);
        assert_eq!(ep.vector(0), vec![1.0]);
    }

    #[test]
    fn random_matrices_meet_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [2, 3, 7, 16, 33, 64] {
            let a = random_sym(&mut rng, n);
            let ep = sym_eigen(&a).unwrap();
            check_contract(&a, &ep);
        }
    }

    #[test]
    fn rank_one_matrix() {
        let w = [1.0, -2.0, 0.5, 3.0];
        let a = SymMatrix::from_upper(4, |i, j| w[i] * w[j]).unwrap();
        let ep = sym_eigen(&a).unwrap();
        check_contract(&a, &ep);
        assert!((ep.values[3] - 14.25).abs() < 1e-12);
        assert!(ep.values[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deterministic_and_oriented() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sym(&mut rng, 12);
        let x = sym_eigen(&a).unwrap();
        let y = sym_eigen(&a).unwrap();
        assert_eq!(x, y);
        for j in 0..12 {
            let v = x.vector(j);
            let lead = v.iter().cloned().fold(0.0f64, |m, t| if t.abs() > m.abs() { t } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = SymMatrix::new(Matrix::from_rows(&[[2.0f32, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
        let ep = sym_eigen(&a).unwrap();
        assert!((ep.values[0] - 1.0f32).abs() < 1e-6);
        assert!((ep.values[1] - 3.0f32).abs() < 1e-6);
    }
}
