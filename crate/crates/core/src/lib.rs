//! Fast spin cat state generation in driven collective-spin ensembles.
//!
//! The crate models `N = 2J` identical spin-1/2 particles restricted to the
//! symmetric (Dicke) subspace and provides:
//!
//! - [`spin`]: Dicke-basis operators, coherent and cat states, parity,
//!   rotations and Husimi Q-functions.
//! - [`dynamics`]: propagation under the driven one-axis-twisting generator
//!   `h(τ) = Jz²/(2J) + r·Jx·cos(ω̃τ + φ)`.
//! - [`catfit`]: fidelity to the cat-state family, first-maximum detection
//!   and drive-parameter scans.
//! - [`interferometry`]: parity fringes, noise ensembles and fringe spectra.
//! - [`eigen`]: instantaneous eigenstructure of the driven generator.
//!
//! Basis convention: index `k = 0..=2J` holds the amplitude of `|J, M = J - k⟩`.

pub mod catfit;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod interferometry;
pub mod optim;
pub mod special;
pub mod spin;
pub mod tridiag;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Toolkit version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
