//! Rate-distortion analysis and coder synthesis for stationary Gaussian
//! sources under a source-uncorrelated distortion constraint.
//!
//! The classical quadratic rate-distortion function allows the reconstruction
//! error to be correlated with the source; real coders built from dithered
//! quantizers produce error that is *uncorrelated* with the source. This
//! crate computes both curves, synthesizes coder architectures that achieve
//! the uncorrelated-distortion curve, and verifies them by Monte-Carlo
//! simulation:
//!
//! * [`rdf`] — the classical (water-filling) rate-distortion function and the
//!   uncorrelated-distortion variant, in both power-spectrum (process) and
//!   covariance (finite block) form;
//! * [`spectra`] — power spectral densities on uniform frequency grids,
//!   autoregressive models, covariance matrices, and conversions between them;
//! * [`coder`] — synthesis of causal transform coders, error-feedback
//!   transform coders, and FIR noise-shaping filter designs realizing the
//!   optimal test channel;
//! * [`quantizer`] — subtractively dithered lattice quantizers (scalar,
//!   square, four- and eight-dimensional) with covariance shaping;
//! * [`sim`] — Monte-Carlo drivers that run the synthesized designs against
//!   ideal noise channels or real dithered quantizers and report empirical
//!   rate, distortion, and the rate loss relative to the analytic curve.
//!
//! The crate also ships the `rdperp` binary, a configuration-file driven
//! front end over the same functionality.
//!
//! Rates are reported in bits per dimension (or per sample for processes)
//! throughout the public API; distortion is per-dimension mean squared error.

pub mod coder;
pub mod error;
mod linalg;
mod numeric;
pub mod quantizer;
pub mod rdf;
pub mod sim;
pub mod spectra;

pub use error::{Error, Result};
