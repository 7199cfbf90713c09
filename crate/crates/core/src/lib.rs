//! Genetic-algorithm NMPC with a learned per-cycle search-margin predictor.

pub mod baselines;
pub mod bsm;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod ga;
pub mod nmpc;
pub mod plant;
pub mod reference;
pub mod report;
pub mod rng;
pub mod svr;

pub use error::{Error, Result};
