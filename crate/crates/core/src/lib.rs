//! Simulation of a frequency-multiplexed heralded single-photon source.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feedforward;
pub mod grid;
pub mod heralded;
pub mod jsa;
pub mod loss;
pub mod quadrature;
pub mod scenario;
pub mod serrodyne;
pub mod spectrometer;
pub mod statistics;
pub mod units;
pub mod window;

pub use error::{Error, Result};
pub use grid::FrequencyGrid;
