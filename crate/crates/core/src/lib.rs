//! Exact Gaussian laws, synchronous couplings and Monte Carlo verification of
//! gradient bounds and functional inequalities for Kolmogorov-type
//! hypoelliptic diffusions.

// `!(x > y)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod matfun;
pub mod model;
pub mod polynomial;
pub mod kernel;
pub mod testfns;
pub mod coupling;
pub mod estimator;
pub mod inequalities;
pub mod cli;

pub use error::{Error, Result};
