//! Homogeneous OHLC bridge estimators of volatility for Wiener-type
//! log-price processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`specialfn`]: Kummer function, Gaussian density, bilateral series.
//! - [`quad`]: Gauss–Legendre and adaptive Gauss–Kronrod integration.
//! - [`stochastic`]: path simulation, incomplete bridges, OHLC extraction.
//! - [`density`]: joint density of bridge high/low and process close.
//! - [`weights`]: the radial-moment weight field `g_λ(θ, φ)`.
//! - [`diagram`]: spherical geometry, diagrams and their moments.
//! - [`estimators`]: applying diagrams to samples.
//! - [`empirical`]: Monte Carlo synthesis of diagrams for tick walks.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod diagram;
pub mod empirical;
pub mod error;
pub mod estimators;
pub mod quad;
pub mod specialfn;
pub mod stochastic;
pub mod weights;

pub use error::{Error, Result};
