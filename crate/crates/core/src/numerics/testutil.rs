//! Random fixtures and residual helpers for unit tests.

use rand::Rng;

use super::matrix::{Matrix, SymMatrix};

pub fn random_sym<R: Rng>(rng: &mut R, n: usize) -> SymMatrix<f64> {
    SymMatrix::from_upper(n, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
}

/// `BᵀB + 0.1·I` for a random square `B`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> SymMatrix<f64> {
    let b = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut a = b.t_matmul(&b).unwrap();
    a.add_diagonal(0.1);
    SymMatrix::symmetrize(a).unwrap()
}

pub fn k_inner(k: &SymMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let kb = k.matvec(b).unwrap();
    a.iter().zip(kb).map(|(x, y)| x * y).sum()
}

/// `‖m·v − λ·b·v‖` with `b = I` when absent.
pub fn residual_norm(m: &Matrix<f64>, v: &[f64], lambda: f64, b: Option<&Matrix<f64>>) -> f64 {
    let mv = m.matvec(v).unwrap();
    let bv = match b {
        Some(b) => b.matvec(v).unwrap(),
        None => v.to_vec(),
    };
    mv.iter()
        .zip(bv)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum::<f64>()
        .sqrt()
}
