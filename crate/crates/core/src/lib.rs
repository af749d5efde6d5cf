//! Simulation and analysis of a pulsed time-bin entangled photon pair source.

mod error;

pub mod analysis;
pub mod analytic;
pub mod engine;
pub mod pair_stats;

pub use error::{Diagnostic, Error, Result};
