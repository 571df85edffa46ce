//! Space-time block code laboratory for 4×2 MIMO.
//!
//! The crate builds the fast-decodable rate-2 code obtained by pairing the
//! Alamouti blocks `(X_A, X_B)` and `(X_C, X_D)` under a Golden rotation,
//! alongside the DjABBA baseline, and provides everything needed to check its
//! claims end to end:
//!
//! * [`numerics`]: small dense real/complex matrices, realification,
//!   modified Gram-Schmidt QR and LU determinants.
//! * [`constellation`]: square M-QAM with per-axis Gray-labelled PAM.
//! * [`codes`]: codeword builders, weight matrices and generator matrices.
//! * [`channel`]: quasi-static Rayleigh fading, AWGN and the real-valued
//!   equivalent channel.
//! * [`decoder`]: exhaustive, sphere and conditional (fast) ML detectors.
//! * [`analysis`]: structural checks of the R-matrix sparsity and the
//!   exhaustive minimum-determinant search.
//! * [`sim`]: Monte Carlo BER engine with CSV output.

pub mod analysis;
pub mod channel;
pub mod codes;
pub mod constellation;
pub mod decoder;
mod error;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
