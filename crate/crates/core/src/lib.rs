//! Numerics for the smallest eigenvalue of ReLU neural tangent kernels.
//!
//! The crate is `no_std` (it needs `alloc`) and covers:
//!
//! * [`sphere`]: unit-sphere datasets, separation statistics, conditioning.
//! * [`specfun`]: log-Gamma, Gegenbauer polynomials, spherical-harmonic
//!   dimensions, addition-formula kernels and Funk–Hecke coefficients.
//! * [`kernel`]: infinite-width limiting kernels, their harmonic (Mercer)
//!   expansion and the harmonic evaluation Gram matrix.
//! * [`bounds`]: closed-form eigenvalue bounds, truncation regimes and width
//!   requirements.
//! * [`ntk`]: finite-width shallow and deep networks at Gaussian
//!   initialization and their NTK Gram matrices.
//! * [`stats`]: small estimators used by the verification sweeps.
//!
//! IO, file formats and the command line live in the `ntk-eigen` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
mod error;
pub mod kernel;
pub mod linalg;
pub mod ntk;
pub mod rng;
pub mod specfun;
pub mod sphere;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::KernelMatrix;
pub use specfun::Activation;
pub use sphere::Dataset;
