//! Bundle-level methods for piecewise-smooth minimization.
//!
//! The crate provides exact and perturbed first-order oracles over max-of-quadratic
//! test problems, the bundle-level method for a known optimal value, a gap-reduction
//! subroutine for unknown optimal values, inexact proximal point wrappers for weakly
//! convex problems, stationarity certificates, and parameter-free restarts on top of
//! them. The `harness` module drives experiments from JSON configs.

pub mod adaptive;
pub mod bundle;
pub mod certify;
pub mod error;
pub mod gapred;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod proximal;
pub mod suite;

pub use error::{Error, Result};
pub use linalg::Point;
