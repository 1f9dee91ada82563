//! A desk-scale numerical laboratory for local SGD / federated averaging.
//!
//! The crate measures the iterate bias of SGD (the gap between the mean
//! SGD iterate and the noiseless GD iterate started at the same point),
//! verifies drift inequalities for the K-local-steps averaging loop
//! against closed-form oracles, fits the bias growth exponents in k and
//! eta, checks the continuous-limit Taylor coefficients of the iterate
//! mean, and evaluates convergence-rate and step-size formulas term by
//! term.
//!
//! Everything is deterministic given a master seed: noise comes from a
//! counter-based keyed generator, work is sharded independently of the
//! worker count, and streaming moments merge in a fixed order.

// Parameter validation writes `!(x > 0.0)` on purpose: NaN must fail the
// check, which the suggested `x <= 0.0` would not do.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod manifest;
pub mod objectives;
pub mod oracles;
mod parallel;
mod quadrature;
pub mod rng;
pub mod scaling;
pub mod sde;

pub use error::{Error, Result};
