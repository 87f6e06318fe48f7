//! Exact Casimir free energy between a sphere and a one-dimensional lamellar
//! grating, computed with the scattering approach on the imaginary frequency
//! axis.

pub mod basis;
pub mod constants;
pub mod energy;
mod error;
pub mod materials;
pub mod mie;
pub mod quadrature;
pub mod rcwa;
pub mod roundtrip;
pub mod specfun;

pub use error::{Error, Result};
