//! Error types shared across the crate.
//!
//! Every fallible public operation returns [`Error`]. Variants are grouped
//! into input-validation failures (bad arguments, malformed files, unstable
//! models) and numerical failures (factorizations that break down, iterations
//! that do not converge, synthesized designs that miss their tolerances).
//! The distinction matters to callers: the CLI maps the former to exit code 2
//! and the latter to exit code 3.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by spectrum handling, design synthesis, quantization, and
/// simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument failed validation (wrong range, wrong shape, inconsistent
    /// options). The message names the offending argument and the constraint.
    #[error("invalid input: {message}")]
    InvalidInput {
        /// Human-readable description of the constraint that was violated.
        message: String,
    },

    /// Two related quantities disagree in size (vector lengths, matrix
    /// dimensions, grid sizes).
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Where the mismatch was detected.
        context: &'static str,
        /// The size required by the operation.
        expected: usize,
        /// The size actually supplied.
        actual: usize,
    },

    /// An autoregressive model has a characteristic root on or outside the
    /// unit circle, so it does not define a stationary process.
    #[error(
        "autoregressive model is not stable: root magnitudes {root_magnitudes:?} \
         (all must be strictly inside the unit circle)"
    )]
    UnstableArModel {
        /// Magnitudes of all characteristic roots, largest first.
        root_magnitudes: Vec<f64>,
    },

    /// An operation that requires a strictly positive power spectrum was given
    /// one with zero (or numerically zero) bins.
    #[error(
        "power spectral density must be strictly positive for this operation \
         (minimum grid value {min_value:e}); spectra with spectral zeros \
         cannot be factored into a stable causal filter"
    )]
    PsdNotStrictlyPositive {
        /// Smallest value found on the grid.
        min_value: f64,
    },

    /// A Cholesky-style factorization hit a non-positive pivot, meaning the
    /// matrix is not positive definite.
    #[error(
        "matrix is not positive definite: leading minor {pivot} has pivot {value:e}"
    )]
    NotPositiveDefinite {
        /// Zero-based index of the failing pivot.
        pivot: usize,
        /// Value of the failing pivot.
        value: f64,
    },

    /// An iterative solver exhausted its iteration budget.
    #[error("{context} did not converge after {iterations} iterations")]
    NoConvergence {
        /// The solver that failed.
        context: &'static str,
        /// Number of iterations performed.
        iterations: usize,
    },

    /// The requested distortion lies outside the interval the operation can
    /// serve; the upper end and whether it is attainable ride along.
    #[error(
        "requested distortion {requested:e} is outside the feasible range \
         (0, {limit:e}{inclusive} for this source",
        inclusive = if *.limit_inclusive { "]" } else { ")" }
    )]
    DistortionOutOfRange {
        /// The distortion the caller asked for.
        requested: f64,
        /// The largest feasible distortion.
        limit: f64,
        /// Whether `limit` itself is feasible.
        limit_inclusive: bool,
    },

    /// A finite impulse response is too short to realize the target response
    /// within tolerance; retry with a longer filter.
    #[error(
        "FIR length {fir_len} cannot realize the target response: \
         residual {residual:e} exceeds tolerance {tolerance:e}; increase the filter length"
    )]
    FirTooShort {
        /// The length that was attempted.
        fir_len: usize,
        /// Achieved reconstruction residual.
        residual: f64,
        /// Tolerance the residual had to meet.
        tolerance: f64,
    },

    /// A synthesized filter that must be minimum phase has a root on or
    /// outside the unit circle.
    #[error(
        "synthesized filter is not minimum phase: largest root magnitude {max_root_radius} \
         (must stay strictly inside the unit circle)"
    )]
    NotMinimumPhase {
        /// Magnitude of the largest root found.
        max_root_radius: f64,
    },

    /// A synthesized design failed one of its construction-time consistency
    /// checks. This indicates a numerically hostile input (e.g. an extremely
    /// ill-conditioned covariance) rather than a bug in the caller.
    #[error(
        "design self-check '{context}' failed: residual {residual:e} \
         exceeds tolerance {tolerance:e}"
    )]
    DesignCheckFailed {
        /// Which internal invariant failed.
        context: &'static str,
        /// Measured residual.
        residual: f64,
        /// Allowed tolerance.
        tolerance: f64,
    },

    /// A simulated feedback loop produced unbounded output, typically because
    /// an inverse-filter approximation is too short for the source.
    #[error(
        "simulation diverged at step {step}: |signal| reached {magnitude:e}; \
         the causal inverse filter is too short or the design is unstable"
    )]
    SimulationDiverged {
        /// Sample index (after burn-in) at which divergence was detected.
        step: u64,
        /// Magnitude that tripped the detector.
        magnitude: f64,
    },

    /// A structured text file (CSV) could not be parsed.
    #[error("malformed CSV at line {line}: {message}")]
    CsvFormat {
        /// One-based line number of the offending row.
        line: usize,
        /// What was wrong with it.
        message: String,
    },

    /// An underlying I/O operation failed.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failed.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidInput`].
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput {
            message: message.into(),
        }
    }

    /// Whether the error reflects bad input (as opposed to a numerical
    /// failure inside an algorithm). Used by the CLI to pick exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput { .. }
                | Error::DimensionMismatch { .. }
                | Error::UnstableArModel { .. }
                | Error::PsdNotStrictlyPositive { .. }
                | Error::DistortionOutOfRange { .. }
                | Error::CsvFormat { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_errors_are_classified_as_input_errors() {
        let err = Error::invalid("bad");
        assert!(err.is_input_error(), "InvalidInput must classify as input error");
        let err = Error::UnstableArModel {
            root_magnitudes: vec![1.2],
        };
        assert!(err.is_input_error(), "unstable model must classify as input error");
    }

    #[test]
    fn numerical_errors_are_not_input_errors() {
        let err = Error::NotPositiveDefinite {
            pivot: 3,
            value: -1e-3,
        };
        assert!(
            !err.is_input_error(),
            "factorization failure must classify as numerical error"
        );
        let err = Error::NoConvergence {
            context: "bisection",
            iterations: 200,
        };
        assert!(
            !err.is_input_error(),
            "non-convergence must classify as numerical error"
        );
    }

    #[test]
    fn messages_carry_actionable_detail() {
        let err = Error::FirTooShort {
            fir_len: 16,
            residual: 3.2e-3,
            tolerance: 1e-3,
        };
        let msg = err.to_string();
        assert!(msg.contains("16"), "message must name the attempted length: {msg}");
        assert!(
            msg.contains("increase the filter length"),
            "message must tell the caller what to do: {msg}"
        );
        let err = Error::DistortionOutOfRange {
            requested: 2.0,
            limit: 1.0,
            limit_inclusive: false,
        };
        let msg = err.to_string();
        assert!(msg.ends_with(") for this source"), "open interval rendering: {msg}");
    }
}
