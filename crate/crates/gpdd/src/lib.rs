//! Uncertainty metrics for Gaussian process regression in the proportional
//! regime d/n → c: exact finite-n free energy and predictive losses, their
//! random-matrix limits, and the empirical-Bayes optimal hyperparameters.

pub mod data;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod quad;
pub mod rmt;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
