//! Simulation and analysis toolkit for the transmon dual-rail erasure qubit.

pub mod analysis;
pub mod calibration;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod noise;
pub mod protocols;
pub mod rng;
pub mod tls;
pub mod units;

pub use error::{Error, Result};
