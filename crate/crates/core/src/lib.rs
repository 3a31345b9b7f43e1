//! Forward marginal effects for black-box regression models.
//!
//! The crate computes finite-step ("forward") marginal effects of arbitrary
//! prediction functions together with the diagnostics needed to interpret
//! them: a line-integral non-linearity measure along the step path,
//! conditional average effects on recursively partitioned feature subspaces,
//! and extrapolation detection for the points a step lands on.

// `!(a > b)` deliberately rejects NaN together with the failing comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod effects;
pub mod error;
pub mod extrapolation;
pub mod nonlinearity;
pub mod predictors;
pub mod scenarios;
mod split;
pub mod subspace;

pub use error::{Error, Result};
