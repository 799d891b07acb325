//! Effective Thevenin impedance of grid-forming inverters from small-signal
//! dq admittance scans of an average-value EMT model.

pub mod analytic;
pub mod emt;
pub mod error;
pub mod fit;
pub mod model;
pub mod scan;
pub mod study;

pub use error::{Error, Result};
