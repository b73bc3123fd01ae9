//! Radiative transport with finite-harmonic scattering on disk domains with
//! a variable index of refraction, and constructive inversion of the
//! boundary measurement map for the interior source.
//!
//! The crate is generic over the floating scalar through [`scalar::Scalar`];
//! the aliases below fix the default double-precision instantiation.

pub mod acceptance;
pub mod config;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod export;
pub mod fiber;
pub mod geometry;
pub mod linalg;
pub mod optics;
pub mod recon;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};

/// Default-precision domain.
pub type Domain = domain::Domain<f64>;
/// Default-precision speed field.
pub type SpeedField = geometry::SpeedField<f64>;
