//! Joint transmit-covariance and port-selection optimization for a UAV-mounted
//! ISAC transmitter equipped with a fluid antenna system.
//!
//! The UAV activates `m0` of `M` linearly arranged ports and serves a ground
//! base station over a line-of-sight MIMO link while keeping a minimum
//! beampattern gain toward a sensing direction. The crate provides:
//!
//! - [`geometry`]: port/antenna offsets, path differences, response matrix and
//!   sensing steering vector.
//! - [`metrics`]: log-det rate, beampattern gain and the feasibility bound.
//! - [`covariance`]: interior-point solver for the covariance subproblem and a
//!   water-filling reference.
//! - [`port_search`]: coordinate-wise and exhaustive port selection.
//! - [`ao`]: the alternating loop between the two subproblems.
//! - [`harness`]: configuration files, experiment sweeps and CSV output.

pub mod ao;
pub mod covariance;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod port_search;

pub use error::{Error, Result};
pub use geometry::{PortSelection, ResponseMatrix, SteeringVector, SystemConfig};
pub use metrics::CovarianceMatrix;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Converts a power in dBm to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Converts linear milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}
