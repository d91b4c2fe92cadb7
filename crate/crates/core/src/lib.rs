//! Simulation and analysis of a polarization-qubit teleportation link:
//! sources, Bell-state measurement, fiber channel, detectors, time-tag
//! coincidence counting, single-qubit tomography and scenario execution.

pub mod bsm;
pub mod budget;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fiber;
pub mod oracle;
pub mod polarization;
pub mod process;
pub mod rng;
pub mod source;
pub mod timetag;
pub mod tomography;

pub use error::{Error, Result};
