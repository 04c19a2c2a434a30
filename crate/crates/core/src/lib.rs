//! Localization of a tri-axial magnetometer relative to a three-coil
//! electromagnetic beacon.
//!
//! The crate covers the forward dipole model ([`field`]), lock-in extraction
//! of the beacon tones ([`dsp`]), sign and sector disambiguation
//! ([`disambiguation`]), the constrained Levenberg-Marquardt inversion and
//! streaming pipeline ([`solver`]), a scenario simulator ([`simulator`]) and
//! post-hoc calibration utilities ([`calibration`]). Run configuration and file
//! formats live in [`config`] and [`io`].

pub mod calibration;
pub mod config;
pub mod disambiguation;
pub mod dsp;
pub mod error;
pub mod field;
pub mod io;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
