//! Cooperative multistatic target localization in a cell-free OFDM network.
//!
//! Radio units take turns illuminating a 2D region while the others listen.
//! The echoes are synthesized from a far-field ULA/OFDM channel model,
//! stacked network-wide, and fitted against a grid dictionary with sparse
//! Bayesian learning (EM) or orthogonal matching pursuit. Pairwise error
//! probability bounds quantify the detection task analytically.

pub mod error;
pub mod detection;
pub mod estimators;
pub mod forward;
pub mod harness;
mod linalg;
pub mod pep;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};

/// Complex scalar used throughout (same type as `faer::c64`).
pub type C64 = num_complex::Complex64;
