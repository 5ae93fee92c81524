//! Numerical engine for one-dimensional sublinear (G-) expectations.
//!
//! The crate computes G- and G̃-expectations of terminal and path-dependent
//! functionals of G-Brownian motion and turns the structural results about
//! them (Lévy's martingale characterization, the reflection principle,
//! Krylov's estimate) into quantitative, reproducible checks.
//!
//! Layout:
//!
//! - [`generator`]: the functions `G`, `G_ε` and dominated generators `G̃`.
//! - [`gheat`]: explicit monotone finite differences for `∂_t u = H(∂²_xx u)`.
//! - [`lattice`]: discrete consistent sublinear expectations, exact history
//!   trees, grid dynamic programming over augmented states, nested `G̃` steps
//!   and the product-space perturbation.
//! - [`pathspace`]: simulated paths, Itô sums, quadratic variation, the
//!   Skorokhod map and discrete local time.
//! - [`envelope`]: Monte Carlo lower bounds under explicit volatility
//!   policies and the policy/DP sandwich.
//! - [`verify`]: one report per theorem check, each with negative controls.
//! - [`config`] and [`cli`]: the `sublin-gbm` front-end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Payoffs are plain
// `dyn Fn` signatures, which clippy counts as complex types.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod cli;
pub mod config;
pub mod envelope;
pub mod error;
pub mod generator;
pub mod gheat;
pub mod lattice;
pub mod pathspace;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use generator::{DominatedGenerator, Nonlinearity, Perturbed, SublinearGenerator, VolatilityBand};

/// Sign convention shared by every module: `sgn(0) = -1`, so the discrete
/// Tanaka accumulator matches the left derivative of `|x|` at the origin.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}
