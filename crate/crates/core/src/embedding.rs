//! Fair feature embeddings in kernel space.
//!
//! An embedding direction is a combination `η = Σ αᵢ φ(xᵢ)` of training points
//! with unit norm (`αᵀKα = 1`). Its projections `⟨φ(x), η⟩ = Σ αᵢ k(x, xᵢ)` are
//! scored by the squared gap between the unprotected and protected group means
//! of the projected training data, which is the quadratic form `αᵀMα` of the
//! mean-discrepancy matrix built by [`build_md_matrix`]. The fairest `k`
//! directions are the generalized eigenvectors of `M·α = λ·K·α` with the `k`
//! smallest eigenvalues; successive directions are `K`-orthogonal.
//!
//! With the rank-one objective every direction orthogonal to the group-mean gap
//! has eigenvalue zero, so the eigenspace that supplies the embedding is
//! (n−1)-fold degenerate and the solver alone does not pin down a basis. Under
//! [`TieBreak::Variance`] each degenerate cluster is rotated so that its
//! directions come in decreasing order of the spread (centered variance) of the
//! projected training data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cross_gram, gram, GramView, KernelSpec};
use crate::numerics::{
    cholesky, default_jitter, generalized_eigen_with, orient, sym_eigen, top_eigen, Cholesky, LanczosOptions,
    Matrix, SymMatrix,
};
use crate::scalar::{dot, norm2, Real};

/// Relative scale of the default Gram jitter (`scale · trace(K) / n`).
pub const DEFAULT_JITTER_SCALE: f64 = 1e-8;

/// Jitter is multiplied by ten up to this many times when the Gram matrix is
/// not numerically positive definite (sigmoid kernels).
const JITTER_ESCALATIONS: usize = 12;

/// How the mean-discrepancy matrix `M` is assembled from the Gram blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdMatrixMode {
    /// `m·mᵀ` with `m = K_uᵀ1_u/n_u − K_pᵀ1_p/n_p`: the exact squared gap of
    /// projected group means.
    #[default]
    RankOne,
    /// `K_uᵀK_u/n_u² − 2·K_uᵀ1_u1_pᵀK_p/(n_u·n_p) + K_pᵀK_p/n_p²`, symmetrized.
    /// Indefinite in general.
    BlockQuadratic,
}

/// Ordering inside degenerate eigenvalue clusters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Decreasing centered variance of the projected training data.
    #[default]
    Variance,
    /// Whatever basis the dense eigensolver returns.
    Solver,
}

/// Which eigen route solves the rank-one problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenRoute {
    /// Closed form for the rank-one objective plus Lanczos on the variance
    /// operator; the block-quadratic objective always uses the dense route.
    #[default]
    Auto,
    /// Full dense generalized eigendecomposition.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingOptions<T> {
    pub k: usize,
    pub mode: MdMatrixMode,
    /// `None` selects the trace-scaled default.
    pub jitter: Option<T>,
    pub tie_break: TieBreak,
    pub route: EigenRoute,
}

impl<T: Real> EmbeddingOptions<T> {
    pub fn new(k: usize) -> Self {
        EmbeddingOptions {
            k,
            mode: MdMatrixMode::default(),
            jitter: None,
            tie_break: TieBreak::default(),
            route: EigenRoute::default(),
        }
    }

    pub fn mode(mut self, mode: MdMatrixMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn jitter(mut self, jitter: T) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn route(mut self, route: EigenRoute) -> Self {
        self.route = route;
        self
    }
}

/// Solution of the embedding eigenproblem on a Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFit<T: Real> {
    /// `A`, one coefficient vector per column (n×k).
    pub coeffs: Matrix<T>,
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Jitter actually used, after any escalation.
    pub jitter: T,
}

/// Fitted embedding: everything needed to project new points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct EmbeddingModel<T: Real> {
    pub train_features: Matrix<T>,
    pub spec: KernelSpec<T>,
    pub coeffs: Matrix<T>,
    pub eigenvalues: Vec<T>,
    pub n_u: usize,
    pub jitter: T,
    pub mode: MdMatrixMode,
}

/// `K_uᵀ1_u/n_u − K_pᵀ1_p/n_p`: the group-mean gap of every kernel column.
pub fn md_vector<T: Real>(g: &GramView<T>) -> Result<Vec<T>> {
    check_groups(g)?;
    let n = g.n();
    let mut su = vec![T::zero(); n];
    let mut sp = vec![T::zero(); n];
    for i in g.rows_u() {
        for (acc, &v) in su.iter_mut().zip(g.full.row(i)) {
            *acc += v;
        }
    }
    for i in g.rows_p() {
        for (acc, &v) in sp.iter_mut().zip(g.full.row(i)) {
            *acc += v;
        }
    }
    let nu = T::of_usize(g.n_u());
    let np = T::of_usize(g.n_p());
    Ok(su.iter().zip(&sp).map(|(&a, &b)| a / nu - b / np).collect())
}

/// Mean-discrepancy matrix of the selected mode.
pub fn build_md_matrix<T: Real>(g: &GramView<T>, mode: MdMatrixMode) -> Result<SymMatrix<T>> {
    check_groups(g)?;
    let n = g.n();
    match mode {
        MdMatrixMode::RankOne => {
            let m = md_vector(g)?;
            SymMatrix::from_upper(n, |i, j| m[i] * m[j])
        }
        MdMatrixMode::BlockQuadratic => {
            let nu = T::of_usize(g.n_u());
            let np = T::of_usize(g.n_p());
            let ku = g.full.select_rows(&g.rows_u().collect::<Vec<_>>());
            let kp = g.full.select_rows(&g.rows_p().collect::<Vec<_>>());
            let gu = ku.t_matmul(&ku)?;
            let gp = kp.t_matmul(&kp)?;
            let su = ku.t_matvec(&vec![T::one(); g.n_u()])?;
            let sp = kp.t_matvec(&vec![T::one(); g.n_p()])?;
            let cross = T::of(2.0) / (nu * np);
            let raw = Matrix::from_fn(n, n, |i, j| {
                gu[(i, j)] / (nu * nu) - cross * su[i] * sp[j] + gp[(i, j)] / (np * np)
            });
            SymMatrix::symmetrize(raw)
        }
    }
}

fn check_groups<T: Real>(g: &GramView<T>) -> Result<()> {
    if g.n_u() == 0 || g.n_p() == 0 {
        return Err(Error::DegenerateGroup(format!(
            "need both groups, got {} unprotected and {} protected rows",
            g.n_u(),
            g.n_p()
        )));
    }
    Ok(())
}

/// Factors `K + jitter·I`, multiplying the jitter by ten while the matrix is
/// not numerically positive definite.
fn factor_with_escalation<T: Real>(k: &SymMatrix<T>, jitter: T) -> Result<(Cholesky<T>, T)> {
    let mut jitter = jitter;
    let mut last = None;
    for _ in 0..=JITTER_ESCALATIONS {
        match cholesky(k, jitter) {
            Ok(c) => return Ok((c, jitter)),
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                log::debug!("Gram matrix not positive definite with jitter {jitter}; escalating");
                last = Some(e);
                jitter = if jitter > T::zero() {
                    jitter * T::of(10.0)
                } else {
                    default_jitter(k, T::of(DEFAULT_JITTER_SCALE))
                };
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Learns the `k` fairest embedding directions on `g`.
pub fn fit_embeddings<T: Real>(g: &GramView<T>, opts: &EmbeddingOptions<T>) -> Result<EmbeddingFit<T>> {
    let n = g.n();
    if opts.k == 0 {
        return Err(Error::InvalidArgument("an embedding needs k >= 1".into()));
    }
    if opts.k > n {
        return Err(Error::KTooLarge { k: opts.k, n });
    }
    check_groups(g)?;
    let jitter = opts
        .jitter
        .unwrap_or_else(|| default_jitter(&g.full, T::of(DEFAULT_JITTER_SCALE)));
    if jitter < T::zero() || !jitter.is_finite() {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {jitter}")));
    }
    let (chol, jitter) = factor_with_escalation(&g.full, jitter)?;

    let structured = opts.mode == MdMatrixMode::RankOne
        && opts.route == EigenRoute::Auto
        && opts.tie_break == TieBreak::Variance;
    let (coeffs, eigenvalues) = if structured {
        rank_one_route(g, &chol, opts.k)?
    } else {
        dense_route(g, &chol, opts)?
    };
    Ok(EmbeddingFit {
        coeffs,
        eigenvalues,
        jitter,
    })
}

fn dense_route<T: Real>(g: &GramView<T>, chol: &Cholesky<T>, opts: &EmbeddingOptions<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let m = build_md_matrix(g, opts.mode)?;
    let ep = generalized_eigen_with(&m, chol)?;
    let n = g.n();
    let mut vectors = ep.vectors;
    let mut values = ep.values;

    if opts.tie_break == TieBreak::Variance {
        let spread = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let tol = T::of(1e-9) * spread;
        let mut start = 0;
        while start < opts.k {
            let mut end = start + 1;
            while end < n && values[end] - values[start] <= tol {
                end += 1;
            }
            if end - start > 1 {
                let idx: Vec<usize> = (start..end).collect();
                let cluster = vectors.select_columns(&idx);
                let rotated = order_by_variance(&g.full, &cluster)?;
                let mean = values[start..end].iter().copied().sum::<T>() / T::of_usize(end - start);
                for (c, &j) in idx.iter().enumerate() {
                    vectors.set_column(j, &rotated.column(c));
                    values[j] = mean;
                }
            }
            start = end;
        }
    }
    let keep: Vec<usize> = (0..opts.k).collect();
    Ok((vectors.select_columns(&keep), values[..opts.k].to_vec()))
}

/// Rotates the columns of `basis` (K-orthonormal) into decreasing order of
/// `‖H·K·α‖²`, where `H` centers over training rows.
fn order_by_variance<T: Real>(k: &SymMatrix<T>, basis: &Matrix<T>) -> Result<Matrix<T>> {
    let mut proj = k.matmul(basis)?;
    center_columns(&mut proj);
    let s = SymMatrix::symmetrize(proj.t_matmul(&proj)?)?;
    let ep = sym_eigen(&s)?;
    let c = basis.cols();
    let desc: Vec<usize> = (0..c).rev().collect();
    let q = ep.vectors.select_columns(&desc);
    let mut rotated = basis.matmul(&q)?;
    for j in 0..c {
        let mut col = rotated.column(j);
        orient(&mut col);
        rotated.set_column(j, &col);
    }
    Ok(rotated)
}

fn center_columns<T: Real>(x: &mut Matrix<T>) {
    let n = x.rows();
    if n == 0 {
        return;
    }
    let nn = T::of_usize(n);
    for j in 0..x.cols() {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<T>() / nn;
        for i in 0..n {
            x[(i, j)] -= mean;
        }
    }
}

/// Rank-one objective: `L⁻¹·m·mᵀ·L⁻ᵀ = w·wᵀ` with `w = L⁻¹·m`, so the null
/// space is `w⊥` and its variance-ordered basis comes from the top eigenpairs
/// of `L⁻¹·K·H·K·L⁻ᵀ` restricted to `w⊥`.
fn rank_one_route<T: Real>(g: &GramView<T>, chol: &Cholesky<T>, k: usize) -> Result<(Matrix<T>, Vec<T>)> {
    let n = g.n();
    let m = md_vector(g)?;
    let mut w = m.clone();
    chol.solve_lower_in_place(&mut w);
    let wn = norm2(&w);
    let deflate: Vec<Vec<T>> = if wn > T::zero() {
        vec![w.iter().map(|&x| x / wn).collect()]
    } else {
        vec![]
    };
    let null_dim = n - deflate.len();
    let from_null = k.min(null_dim);

    let kf = &g.full;
    let nn = T::of_usize(n);
    let apply = |beta: &[T]| -> Vec<T> {
        let mut alpha = beta.to_vec();
        chol.solve_upper_in_place(&mut alpha);
        let mut v = kf.matvec(&alpha).expect("square operator");
        let mean = v.iter().copied().sum::<T>() / nn;
        v.iter_mut().for_each(|x| *x -= mean);
        let mut u = kf.matvec(&v).expect("square operator");
        chol.solve_lower_in_place(&mut u);
        u
    };
    let top = top_eigen(n, from_null, apply, &deflate, LanczosOptions::default())?;

    let mut coeffs = Matrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (j, beta) in top.vectors.iter().enumerate() {
        let mut alpha = beta.clone();
        chol.solve_upper_in_place(&mut alpha);
        orient(&mut alpha);
        coeffs.set_column(j, &alpha);
        values.push(T::zero());
    }
    if k > from_null {
        // k == n: the remaining direction is the one along w
        let mut alpha = deflate[0].clone();
        chol.solve_upper_in_place(&mut alpha);
        orient(&mut alpha);
        coeffs.set_column(k - 1, &alpha);
        values.push(wn * wn);
    }
    Ok((coeffs, values))
}

impl<T: Real> EmbeddingModel<T> {
    /// Builds the Gram matrix of `features` (unprotected rows first) and fits
    /// the embedding. The Gram view is returned for projecting the training set.
    pub fn fit(
        features: &Matrix<T>,
        n_u: usize,
        spec: KernelSpec<T>,
        opts: &EmbeddingOptions<T>,
    ) -> Result<(Self, GramView<T>)> {
        let g = gram(&spec, features, n_u)?;
        let fit = fit_embeddings(&g, opts)?;
        Ok((Self::from_fit(features.clone(), spec, n_u, opts.mode, fit), g))
    }

    pub fn from_fit(
        train_features: Matrix<T>,
        spec: KernelSpec<T>,
        n_u: usize,
        mode: MdMatrixMode,
        fit: EmbeddingFit<T>,
    ) -> Self {
        EmbeddingModel {
            train_features,
            spec,
            coeffs: fit.coeffs,
            eigenvalues: fit.eigenvalues,
            n_u,
            jitter: fit.jitter,
            mode,
        }
    }

    pub fn k(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn n_train(&self) -> usize {
        self.train_features.rows()
    }

    /// `X_FS = K·A`; row `i` is the embedding of training instance `i`.
    pub fn project_train(&self, g: &GramView<T>) -> Result<Matrix<T>> {
        if self.k() == 0 {
            return Err(Error::InvalidArgument("embedding has no directions".into()));
        }
        if g.n() != self.coeffs.rows() {
            return Err(Error::DimensionMismatch(format!(
                "Gram matrix is {0}x{0} but the model was fit on {1} instances",
                g.n(),
                self.coeffs.rows()
            )));
        }
        g.full.matmul(&self.coeffs)
    }

    /// Embeds new points through their kernel rows against the training set.
    pub fn project_test(&self, test_features: &Matrix<T>) -> Result<Matrix<T>> {
        if self.k() == 0 {
            return Err(Error::InvalidArgument("embedding has no directions".into()));
        }
        let rows = cross_gram(&self.spec, &self.train_features, test_features)?;
        rows.matmul(&self.coeffs)
    }

    /// Largest deviation of `AᵀK̃A` from the identity (K̃ = K + jitter·I).
    pub fn orthonormality_defect(&self, g: &GramView<T>) -> Result<T> {
        let kj = g.full.with_jitter(self.jitter);
        let ka = kj.matmul(&self.coeffs)?;
        let gram_a = self.coeffs.t_matmul(&ka)?;
        let mut worst = T::zero();
        for i in 0..self.k() {
            for j in 0..self.k() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((gram_a[(i, j)] - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Squared gap between group-mean projections along `alpha`: `(mᵀα)²`.
pub fn projected_gap<T: Real>(g: &GramView<T>, alpha: &[T]) -> Result<T> {
    let m = md_vector(g)?;
    let d = dot(&m, alpha);
    Ok(d * d)
}
