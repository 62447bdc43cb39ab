//! Numerical laboratory for discretized Feynman-Kac semigroups of diffusions
//! on the one-dimensional torus.
//!
//! The principal eigenvalue of `L + W` and averages under the tilted
//! stationary measure are estimated two ways:
//!
//! - [`smc`]: a population Monte Carlo method with multinomial resampling,
//!   driven by the one-step kernels in [`integrators`];
//! - [`galerkin`]: a deterministic Fourier-Galerkin solver that also builds
//!   the leading-order timestep corrections.
//!
//! [`harness`] runs timestep sweeps and order fits on top of both, and
//! [`cli`] wires everything to JSON configs and CSV/SVG artifacts.

pub mod cli;
pub mod error;
pub mod galerkin;
pub mod harness;
pub mod integrators;
pub mod model;
pub mod smc;

pub use error::{Error, Result};
