//! Numerical laboratory for first-order and stochastic optimal prediction.
//!
//! The crate contains three demonstrators of increasing size:
//!
//! - [`hald`]: a two-oscillator Hamiltonian system with its Galerkin and
//!   first-order optimal-prediction reductions, plus a Monte Carlo oracle for
//!   the conditioned ensemble mean.
//! - [`langevin`]: an Ornstein-Uhlenbeck process illustrating the balance
//!   between damping and white-noise forcing.
//! - The truncated 2D averaged Euler system ([`spectral`], [`dynamics`]),
//!   its Monte Carlo ensemble and correlation statistics ([`ensemble`]), and a
//!   stochastic reduced model for the resolved modes ([`reduced`]).
//!
//! All time stepping goes through [`integrate`]. Ensembles draw each
//! realization from its own deterministic random stream (see [`rng`]) and
//! reduce in realization order, so results do not depend on the number of
//! worker threads.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hald;
pub mod integrate;
pub mod langevin;
pub mod reduced;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
