//! Numerical Kaluza-Klein geometry on trivialized principal bundles.
//!
//! The crate assembles Kaluza-Klein metrics from a gauge potential, a fiber
//! metric and a base metric, evaluates the adapted-frame connection and the
//! O'Neill tensors, integrates the generalized Wong equations, measures the
//! tension of maps into the bundle and ships the complex and quaternionic
//! Hopf fibrations as worked examples.

pub mod cli;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod hopf;
pub mod jet;
pub mod liealg;
pub mod tension;
pub mod tensor;
pub mod wong;

pub use error::{KkError, Result};
