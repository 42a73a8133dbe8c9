//! Critical branching random walks, their size-biased spines, and Monte Carlo
//! estimators for the limiting cluster-invariant point processes.

pub mod branching;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod laws;
pub mod pointfield;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
