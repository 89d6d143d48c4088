//! Simulation of trio coherent state generation in the vibrational motion
//! of a trapped ion.

pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod harness;
pub mod laser_config;
pub mod observables;
pub mod tcs_state;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
