//! First-passage time `tau(x)` and first-passage area `A(x)` below zero of the
//! Lévy process `X(t) = x - mu t + sigma B_t - N_t`.
//!
//! * [`poisson`]: closed forms for `mu = sigma = 0`.
//! * [`joint_moments`]: `E[tau^m A^n]` by recursion over unit steps and by the
//!   triangular coefficient recursion at integer `x`.
//! * [`expoly`] and [`steps`]: method-of-steps solutions of the delay
//!   equations for the drifted and Brownian models.
//! * [`montecarlo`]: path samplers and estimators used as an oracle.
//! * [`cli`]: the `levy-fpa` command line front end.

// `!(a > b)` is the NaN-rejecting form used throughout input validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod expoly;
pub mod joint_moments;
pub mod montecarlo;
pub mod params;
pub mod poisson;
pub mod steps;

pub use error::{FpaError, Result};
pub use params::{barrier_reduce, classify_model, IntegerClass, ModelKind, ProcessParams};
