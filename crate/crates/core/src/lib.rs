//! Simulation of a two-level atom with quantized motion in a driven, lossy
//! standing-wave cavity.

pub mod bessel;
pub mod checkpoint;
pub mod closed;
pub mod error;
pub mod hilbert;
pub mod lanczos;
pub mod meanfield;
pub mod open;
pub mod propagate;
pub mod sparse;
pub mod trajectory;
pub mod wigner;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Library version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
