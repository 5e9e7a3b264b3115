//! Randomized volume computation and rounding for convex bodies given by a
//! membership oracle.
//!
//! The pipeline rounds the body to near-isotropic position with
//! [`rounding::iterative_isotropization`], measures the rounded image with
//! Gaussian cooling ([`annealing::volume_well_rounded`]), and maps the result
//! back through the log-determinant of the rounding map.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealing;
pub mod bodies;
pub mod covariance;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod rounding;
pub mod verify;
pub mod walks;

pub use error::{Error, Result};
