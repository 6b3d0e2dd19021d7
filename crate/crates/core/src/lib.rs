//! Numerical laboratory for spherical single-index models.
//!
//! The crate is organized around the harmonic decomposition of the sphere:
//!
//! - [`basis`]: Gegenbauer and Hermite polynomials, harmonic subspace
//!   dimensions, the Hermite-to-Gegenbauer radial coefficients, and chi
//!   distribution moments.
//! - [`quadrature`]: Gauss rules for the one-coordinate sphere marginal and
//!   for the chi radial law.
//! - [`tensor`]: dense and implicit harmonic tensors, unfolding matvecs, and
//!   vector extraction for the unfolding estimators.
//! - [`model`]: planted and null sampling of spherical single-index models,
//!   dataset serialization.
//! - [`transform`]: label transformations (likelihood-based, correlation
//!   query, Hermite baselines) together with their recorded correlations.
//! - [`estimators`]: spectral, boosting, online SGD, tensor unfolding, and
//!   the Gaussian baselines.
//! - [`complexity`]: sample/query complexity functionals and rate tables.
//! - [`harness`]: reproducible experiment sweeps, critical sample size
//!   search, and scaling-exponent fits.

pub mod basis;
pub mod complexity;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod tensor;
pub mod transform;
pub mod vec_ops;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum SimlabError {
    #[error("integer overflow computing {what} at d={d}, ell={ell}")]
    Overflow { what: &'static str, d: usize, ell: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("memory budget exceeded: {need} entries > {budget} (use the implicit operator)")]
    MemoryBudget { need: u128, budget: u128 },
    #[error("degenerate result: {0}")]
    Degenerate(String),
    #[error("posterior undefined: conditional density mass below {0:e}")]
    PosteriorUndefined(f64),
    #[error("numerical abort: {0}")]
    NumericalAbort(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("search range exhausted: {0}")]
    RangeExhausted(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimlabError>;
