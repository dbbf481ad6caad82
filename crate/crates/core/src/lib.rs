//! Generalized U-statistics and their jackknife variance estimators.
//!
//! The crate covers complete and Bernoulli-incomplete U-statistics with
//! possibly randomized kernels, exact Hoeffding decompositions under finite
//! discrete distributions, delete-d jackknife variance estimation, and the
//! two-scale distributional nearest-neighbour (TDNN) regression estimator
//! with studentized confidence intervals.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod data;
pub mod error;
pub mod hoeffding;
pub mod jackknife;
pub mod kernel;
pub mod simulation;
pub mod stream;
pub mod sum;
pub mod tdnn;
pub mod ustat;
pub mod verify;

pub use data::DataView;
pub use error::{Error, Result};
