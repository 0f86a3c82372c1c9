//! Extreme values of random Euler products attached to the Sato-Tate measure.
//!
//! The random model is `L(1; y) = prod_{p <= y} (1 - 2 cos(theta_p)/p + 1/p^2)^-1`
//! with independent Sato-Tate angles `theta_p`. This crate evaluates the tail
//! probabilities
//!
//! * `Phi(t, y) = P(L >= (e^gamma t)^2)` and
//! * `Psi(t, y) = P(L <= (zeta(2) / (e^gamma t))^2)`
//!
//! by a Gaussian saddle-point formula, by asymptotic expansions with computed
//! constants, by a smoothed Perron contour integral, and by plain or
//! exponentially tilted Monte Carlo. All probabilities are carried as natural
//! logarithms.

// `!(x >= a)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consts;
pub mod error;
pub mod invariants;
pub mod local;
pub mod model;
pub mod monte_carlo;
pub mod parallel;
pub mod primes;
pub mod profile;
pub mod quadrature;
pub mod report;
pub mod saddle;
pub mod tail;

pub use error::{Error, Result};
pub use quadrature::QuadratureSpec;
