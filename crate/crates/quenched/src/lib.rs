//! Numerical laboratory for quenched large deviations of random walks in random
//! environments with random holding times.
//!
//! A walk on Z^d picks nearest-neighbour steps from a site-dependent kernel and
//! waits a random holding time at every visit. The crate computes the crossing
//! functionals
//!
//! ```text
//!     e_lambda(x, y) = E_x[ exp{ -sum_{m < H(y)} theta_lambda(X_m) } ; H(y) < inf ]
//!     a_lambda(x, y) = -log e_lambda(x, y)
//! ```
//!
//! where `theta_lambda(z) = -log E[exp(-lambda tau_z)]` is the log-Laplace
//! exponent of the holding law at `z`, and builds on them: directional Lyapunov
//! exponents, the Legendre-transform rate function of the walk's position at
//! large times, and the first-passage-percolation limit that governs the
//! large-argument shape of the rate function.
//!
//! Modules mirror that pipeline: [`scenery`] (environments), [`crossing`]
//! (finite-box solver), [`oracle1d`] (exact one-dimensional recursion),
//! [`lyapunov`], [`rate`], [`fpp`], [`montecarlo`], and [`cli`].
//!
//! Everything downstream of a master seed is a pure function of that seed;
//! see [`rng`] for the counter-based stream design.

pub mod cli;
pub mod crossing;
pub mod fpp;
pub mod lattice;
pub mod lyapunov;
pub mod montecarlo;
pub mod oracle1d;
mod quadrature;
pub mod rate;
pub mod report;
pub mod rng;
pub mod scenery;
pub mod validation;

/// Crate-wide error type. Solver non-convergence is not an error: results
/// carry explicit flags instead. Errors are reserved for violated
/// preconditions and malformed configuration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid holding law: {0}")]
    InvalidLaw(String),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("no common Tauberian scale: {0}")]
    NoCommonScale(String),
    #[error("site {0:?} lies outside the box")]
    OutsideBox(Vec<i64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("objective is not concave within tolerance: {0}")]
    NotConcave(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
