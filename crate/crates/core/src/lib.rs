//! Interferometric phase toolkit: simulation of noisy wrapped-phase scenes,
//! classic filters (boxcar, Goldstein), a self-supervised mixture-density
//! network filter with generative sampling, and the evaluation metrics used
//! to compare them.

pub mod config;
pub mod error;
pub mod filters;
pub mod geninsar;
pub mod grid;
pub mod mdn;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
