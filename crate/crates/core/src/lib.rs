//! Mixture-of-low-rank-Gaussian laboratory for studying how the quality of
//! diffusion-model representations varies with the noise level.

pub mod analytic;
pub mod dae;
pub mod denoiser;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod molrg;
mod par;
pub mod probe;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
