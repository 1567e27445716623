//! Pseudo-spectral laboratory for the compressible Navier-Stokes system with
//! quantum pressure, posed in pseudo-measure and Kato spaces.
//!
//! The whole space is approximated by a periodic box of side `L`; Fourier
//! coefficients live on the lattice `(2π/L)·k`. The crate provides the
//! linear semigroup, the quadratic terms, a Picard solver for the Duhamel
//! formulation, analyticity-radius measurements and numerical checks of the
//! estimates the well-posedness theory relies on.

pub mod error;
pub mod fft;
pub mod harness;
pub mod analyticity;
pub mod duhamel;
pub mod linear;
pub mod nonlinear;
pub mod oracles;
pub mod params;
pub mod quadrature;
pub mod spectral;

pub use error::{NskqError, Result};
pub use params::{GridSpec, ModelParams, SolverConfig};
