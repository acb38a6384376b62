//! Equilibria of random non-gradient flows on the sphere.
//!
//! The crate samples the random quadratic vector field, counts its equilibria
//! by multi-start Newton, follows the constrained dynamics, and evaluates the
//! exact and asymptotic mean equilibrium counts through the real elliptic
//! ensemble.

pub mod dynamics;
pub mod elliptic;
pub mod equilibria;
pub mod error;
pub mod export;
pub mod field_model;
pub mod kac_rice;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
