//! Sampling and multilevel Monte Carlo estimation for elliptic problems with
//! jump-diffusion random coefficients.
//!
//! The crate is organised along the simulation pipeline:
//!
//! * [`spectra`] — covariance eigenpairs and truncated Karhunen–Loève sampling
//!   of the Gaussian component.
//! * [`jumps`] — random partitions of the domain and per-cell jump heights,
//!   including an inverse-CDF sampler with a certified moment-error bound.
//! * [`coefficient`] — composition and point evaluation of one coefficient
//!   realization `a(x) = abar(x) + Phi(W_N(x)) + P_eps(x)`.
//! * [`fem1d`] / [`fem2d`] — sample-adaptive (interface-fitted) and uniform
//!   P1 finite elements with prolongation onto fixed reference grids.
//! * [`estimators`] — Monte Carlo, multilevel Monte Carlo and bootstrap
//!   multilevel Monte Carlo estimation of the mean solution field.
//! * [`harness`] — experiment presets, CSV/plot-data emission and manifests.
//! * [`verification`] — the acceptance and invariant check suites.

pub mod bessel;
pub mod coefficient;
pub mod estimators;
pub mod fem1d;
pub mod fem2d;
pub mod harness;
pub mod jumps;
pub mod rng;
pub mod spectra;
pub mod verification;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigendecomposition failed: {detail}")]
    Eigendecomposition { detail: String },
    #[error("spectrum cannot reach tail target {target:e} within the mode cap {cap}")]
    CutoffCapExceeded { target: f64, cap: usize },
    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("construction mismatch: {0}")]
    Mismatch(String),
    #[error("rejection sampler exceeded {0} iterations; parameters are pathological")]
    RejectionBudget(u64),
    #[error("requested bias {requested:e} needs a table beyond the memory cap; minimum achievable bias is {min_achievable:e}")]
    TableTooLarge { requested: f64, min_achievable: f64 },
    #[error("coefficient is not strictly positive (min probe value {0:e})")]
    InvalidCoefficient(f64),
    #[error("mesh degeneracy: {0}")]
    MeshDegeneracy(String),
    #[error("mesh quality: {0}")]
    MeshQuality(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("oracle resolution: {0}")]
    OracleResolution(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
