//! Covert (low probability of detection) communication against an adversary
//! that watches received power with a sequential change-point detector.
//!
//! All quantities use the normalized channel in which the adversary's noise
//! power is 1. Observations are `X = |y|^2`, exponential with mean 1 before
//! the change and mean `1 + q` while the transmitter is active.

pub mod calibration;
pub mod covert;
pub mod detectors;
pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod optimizer;
pub mod signal;

pub use detectors::TestKind;
pub use error::{Error, Result};
