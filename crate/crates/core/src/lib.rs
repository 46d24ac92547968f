//! Numerical laboratory for backward SDEs driven by fractional Brownian motion and
//! general Gaussian processes.

pub mod coeff;
pub mod container;
pub mod density;
pub mod error;
pub mod fbm;
pub mod generator;
pub mod heat;
pub mod interp;
pub mod par;
pub mod pde;
pub mod quad;
pub mod rng;

pub mod transfer;
pub use error::{LabError, Result};
