//! Baselines, evaluation, experiment sweeps and the command-line driver.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod checks;
pub mod stats;

pub use error::{Error, Result};
