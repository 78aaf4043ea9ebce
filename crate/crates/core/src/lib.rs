//! Coverage of bounded scenario parameter spaces and the economics of
//! filling them.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: parameter points, ellipsoidal coverage kernels, Monte Carlo
//!   union volumes and the dilated reference volume.
//! - [`fitting`]: cumulative Weibull saturation models of coverage growth,
//!   bootstrap convergence diagnostics and the coverage coefficient.
//! - [`metamodel`]: the method-agnostic description of a scenario acquisition
//!   method (coverage family, error rate, costs) and its fitting.
//! - [`economics`]: check sizes for quality assurance and the cost-optimal
//!   mix of mining and generation.
//! - [`synthetic`]: seeded scenario sources with known ground truth.

pub mod economics;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod metamodel;
pub mod synthetic;

pub use error::{Error, Result};
