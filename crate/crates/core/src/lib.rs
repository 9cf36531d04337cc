//! Adapted Wasserstein distances between laws of scalar SDEs.
//!
//! The continuous side simulates two SDEs on a shared Brownian path
//! (the synchronous coupling) with explicit, semi-implicit and
//! transformed semi-implicit Euler schemes. The discrete side computes
//! exact bicausal transport values and optimal stopping values on finite
//! probability trees.

pub mod bicausal;
pub mod error;
pub mod estimator;
pub mod models;
pub mod randomness;
pub mod schemes;
pub mod stopping;
pub mod transform;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Mathematical sign with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
