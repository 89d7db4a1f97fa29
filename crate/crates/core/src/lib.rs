//! Simulation and analysis toolkit for quantum lock-in detection with a
//! single two-level probe.
//!
//! A train of π pulses turns the probe into a lock-in amplifier: its phase
//! only accumulates the part of a frequency shift that is synchronous with
//! the pulse spacing. The crate provides the pulse sequences, signal and
//! noise models, an exact propagator, the analytic lock-in responses, fits
//! and metrology analysis, and light-shift spectroscopy models.

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod lockin;
pub mod noise;
pub mod rng;
pub mod sequence;
pub mod spectroscopy;
pub mod special;

mod linalg;
mod lsq;
mod quad;

pub use error::{Error, Result};
