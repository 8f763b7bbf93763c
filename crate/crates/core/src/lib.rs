//! Numerical core of the rectiforge RF rectifier simulator.
//!
//! Everything in this crate is a pure function of its inputs and builds for
//! `no_std` targets with an allocator. File IO, the command line and the
//! worker pool live in the `rectiforge` crate.

#![no_std]
// Float math goes through `num_traits::Float`. Whenever std ends up in the
// build graph (tests, or a std-enabled dependency) its inherent f64 methods
// win and those imports look unused, hence the local allows.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod devices;
mod error;
pub mod hb;
pub mod linalg;
pub mod linear;
pub mod media;
pub mod netlist;
pub mod optimize;
pub mod transient;
pub mod units;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_8128e-12;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
