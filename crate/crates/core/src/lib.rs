//! Fair kernel regression through fair feature embeddings.
//!
//! Training points are mapped into a kernel feature space, a few directions
//! are learned there along which the protected and unprotected groups have
//! (nearly) equal means, and a ridge regression on the projections onto those
//! directions gives the predictor. A fairness-penalized kernel ridge baseline,
//! fairness metrics, CSV ingestion and a reproducible experiment harness are
//! included.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

// `!(x > 0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod numerics;
pub mod persist;
pub mod regression;
pub mod scalar;

pub use error::{Error, Result};
pub use persist::Persist;

pub type Matrix = numerics::Matrix<f64>;
pub type SymMatrix = numerics::SymMatrix<f64>;
pub type KernelSpec = kernels::KernelSpec<f64>;
pub type GramView = kernels::GramView<f64>;
pub type EmbeddingModel = embedding::EmbeddingModel<f64>;
pub type EmbeddingOptions = embedding::EmbeddingOptions<f64>;
pub type FairRegressor = regression::FairRegressor<f64>;
pub type FkrrModel = regression::FkrrModel<f64>;
pub type Dataset = data::Dataset<f64>;

pub type Matrix32 = numerics::Matrix<f32>;
pub type SymMatrix32 = numerics::SymMatrix<f32>;
pub type KernelSpec32 = kernels::KernelSpec<f32>;
pub type EmbeddingModel32 = embedding::EmbeddingModel<f32>;
pub type FairRegressor32 = regression::FairRegressor<f32>;
pub type Dataset32 = data::Dataset<f32>;
