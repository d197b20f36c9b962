//! Synthesis of coder architectures that realize the uncorrelated-distortion
//! rate-distortion function.
//!
//! Three constructions are provided, all driven by the optimal distortion
//! covariance/spectrum from [`crate::rdf`]:
//!
//! * [`design_causal_transform`] — a lower-triangular transform `T` such that
//!   passing `T x` through an AWGN channel of variance `sigma_w2` and
//!   inverting yields reconstruction error with exactly the optimal
//!   covariance; built from the Cholesky factor of the scaled optimal noise
//!   covariance.
//! * [`design_feedback_transform`] — the error-feedback variant `(A, F, D)`:
//!   a lower-triangular analysis transform `A`, a strictly-lower-triangular
//!   error feedback `F`, and per-channel output variances `D`. The feedback
//!   whitens the channel output, so each channel can be coded independently
//!   at rate `log2(D_k / sigma_w2) / 2` and the per-channel rates sum to the
//!   vector-form uncorrelated-distortion rate.
//! * [`design_noise_shaper`] — the stationary-process analogue: causal FIR
//!   filters `a` (pre-filter), `f` (noise feedback, strictly causal), and
//!   `a_inv` (causal reconstruction filter), synthesized by minimum-phase
//!   spectral factorization of closed-form target magnitude responses. The
//!   loop output `U-hat` is white with variance `sigma_u2`, and
//!   `log2(sigma_u2 / sigma_w2) / 2` equals the process rate.
//!
//! The factorization workhorse is [`min_phase_spectral_factor`]: given a
//! strictly positive magnitude-squared response on the canonical grid it
//! returns a causal FIR whose roots all lie inside the unit circle, via the
//! real-cepstrum method (log, causal folding, exponentiation — all by FFT).
//!
//! Every design validates its own invariants at construction time and on
//! deserialization; a design object that exists is a design that checks out.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, lower_triangular_inverse, unit_ldl};
use crate::rdf::{uncorr_at_distortion, vector_uncorr_rdf};
use crate::spectra::{canonical_omegas, CovarianceMatrix, PsdGrid};

/// Relative Frobenius tolerance for matrix-design self checks.
const MATRIX_RESIDUAL_TOL: f64 = 1e-9;

/// Tolerance (bits) for the per-channel rate identity against the vector
/// rate-distortion solver.
const RATE_IDENTITY_TOL: f64 = 1e-8;

/// Bound on `|(1/2pi) int ln|1-F| domega|` for a valid noise shaper
/// (natural log; the ideal target integrates to exactly zero).
const BODE_TOL: f64 = 1e-3;

/// FIR roots must have magnitude at most this to count as minimum phase.
const ROOT_RADIUS_MAX: f64 = 1.0 - 1e-6;

/// The cepstral factorization needs this much grid headroom per FIR tap to
/// keep aliasing below the Bode/root tolerances.
const GRID_PER_TAP: usize = 64;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// FIR helpers
// ---------------------------------------------------------------------------

/// Magnitude-squared response `|H(e^{j omega})|^2` of a causal FIR on the
/// canonical frequency grid.
pub fn fir_power_response(coeffs: &[f64], grid_size: usize) -> Vec<f64> {
    canonical_omegas(grid_size)
        .iter()
        .map(|&omega| {
            let w = Complex::new(omega.cos(), -omega.sin());
            let mut acc = Complex::new(0.0, 0.0);
            for &c in coeffs.iter().rev() {
                acc = acc * w + c;
            }
            acc.norm_sqr()
        })
        .collect()
}

/// Largest zero magnitude of the FIR transfer function
/// `H(z) = sum_m coeffs[m] z^{-m}`, via companion-matrix eigenvalues.
/// Returns `None` when the (trimmed) polynomial has no zeros.
pub fn max_root_radius(coeffs: &[f64]) -> Option<f64> {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return None;
    }
    // Leading zero taps are pure delay and contribute no zeros; trailing
    // zero taps only add zeros at the origin.
    let tiny = 1e-300;
    let start = coeffs.iter().position(|c| c.abs() > tiny)?;
    let end = coeffs.iter().rposition(|c| c.abs() > tiny)?;
    let poly = &coeffs[start..=end];
    let degree = poly.len() - 1;
    if degree == 0 {
        return None;
    }
    let lead = poly[0];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -poly[j + 1] / lead;
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
}

/// Minimum-phase spectral factorization: returns a causal FIR `h` of length
/// `fir_len` with `|H(e^{j omega})|^2` approximating `mag_sq` and all zeros
/// strictly inside the unit circle.
///
/// Method: real cepstrum of `ln(mag_sq)/2`, folded onto the causal axis,
/// exponentiated in the frequency domain, inverse-transformed, truncated.
/// Accuracy improves geometrically with grid size relative to the spectral
/// dynamics; `fir_len <= G/8` is required as a floor.
pub fn min_phase_spectral_factor(mag_sq: &PsdGrid, fir_len: usize) -> Result<Vec<f64>> {
    if !mag_sq.is_strictly_positive() {
        return Err(Error::PsdNotStrictlyPositive {
            min_value: mag_sq.min_value(),
        });
    }
    let g = mag_sq.grid_size();
    if fir_len == 0 {
        return Err(Error::invalid("FIR length must be at least 1"));
    }
    if fir_len > g / 8 {
        return Err(Error::invalid(format!(
            "FIR length {fir_len} too long for grid size {g}: need fir_len <= G/8"
        )));
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(g);
    let inverse = planner.plan_fft_inverse(g);

    // Reorder from the symmetric grid (starting at -pi) to DFT order
    // (starting at 0), then take the real cepstrum of the log magnitude.
    let values = mag_sq.values();
    let mut buf: Vec<Complex<f64>> = (0..g)
        .map(|k| Complex::new(0.5 * values[(k + g / 2) % g].ln(), 0.0))
        .collect();
    inverse.process(&mut buf);
    let cepstrum: Vec<f64> = buf.iter().map(|c| c.re / g as f64).collect();

    // Fold the even cepstrum onto the causal axis: this maps magnitude-only
    // information to the unique minimum-phase spectrum.
    let mut folded: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); g];
    folded[0] = Complex::new(cepstrum[0], 0.0);
    for m in 1..g / 2 {
        folded[m] = Complex::new(2.0 * cepstrum[m], 0.0);
    }
    folded[g / 2] = Complex::new(cepstrum[g / 2], 0.0);

    forward.process(&mut folded);
    for c in folded.iter_mut() {
        *c = c.exp();
    }
    inverse.process(&mut folded);
    Ok(folded
        .iter()
        .take(fir_len)
        .map(|c| c.re / g as f64)
        .collect())
}

/// Mean of `ln |H|` over the grid for an FIR — the Bode sensitivity integral.
/// Zero (to tolerance) for a monic minimum-phase filter.
fn bode_integral(coeffs: &[f64], grid_size: usize) -> f64 {
    let response = fir_power_response(coeffs, grid_size);
    response.iter().map(|&p| 0.5 * p.ln()).sum::<f64>() / grid_size as f64
}

/// Relative L2 deviation of `got` from `want`:
/// `||got - want||_2 / ||want||_2` over the grid.
fn relative_l2(got: &[f64], want: &[f64]) -> f64 {
    debug_assert_eq!(got.len(), want.len());
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(&g, &w)| (g - w) * (g - w))
        .sum();
    let den: f64 = want.iter().map(|&w| w * w).sum();
    (num / den).sqrt()
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)])
        .collect()
}

fn matrix_from_rows(dim: usize, data: &[f64], context: &'static str) -> Result<DMatrix<f64>> {
    if data.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            context,
            expected: dim * dim,
            actual: data.len(),
        });
    }
    Ok(DMatrix::from_row_slice(dim, dim, data))
}

// ---------------------------------------------------------------------------
// Causal transform design
// ---------------------------------------------------------------------------

/// A causal (lower-triangular) transform coder: sending `T x` over an AWGN
/// channel of variance `sigma_w2` and applying `T^{-1}` yields
/// reconstruction error with covariance exactly the optimal distortion
/// covariance for the design distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformDesignData", into = "TransformDesignData")]
pub struct TransformDesign {
    t: DMatrix<f64>,
    sigma_w2: f64,
    target_noise: CovarianceMatrix,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
}

/// Serialized form of [`TransformDesign`] (matrix row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformDesignData {
    dim: usize,
    t: Vec<f64>,
    sigma_w2: f64,
    target_noise: CovarianceMatrix,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
}

impl TryFrom<TransformDesignData> for TransformDesign {
    type Error = Error;
    fn try_from(data: TransformDesignData) -> Result<Self> {
        let t = matrix_from_rows(data.dim, &data.t, "transform matrix")?;
        let design = TransformDesign {
            t,
            sigma_w2: data.sigma_w2,
            target_noise: data.target_noise,
            rate_bits: data.rate_bits,
            distortion: data.distortion,
            alpha: data.alpha,
        };
        design.validate()?;
        Ok(design)
    }
}

impl From<TransformDesign> for TransformDesignData {
    fn from(d: TransformDesign) -> Self {
        TransformDesignData {
            dim: d.t.nrows(),
            t: matrix_to_rows(&d.t),
            sigma_w2: d.sigma_w2,
            target_noise: d.target_noise,
            rate_bits: d.rate_bits,
            distortion: d.distortion,
            alpha: d.alpha,
        }
    }
}

impl TransformDesign {
    /// Block dimension.
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// The lower-triangular analysis transform `T`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// AWGN channel variance the design assumes.
    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    /// The optimal distortion covariance this design realizes.
    pub fn target_noise_covariance(&self) -> &CovarianceMatrix {
        &self.target_noise
    }

    /// Design rate in bits per dimension (the vector-form
    /// uncorrelated-distortion rate at the design distortion).
    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    /// Per-dimension distortion the design achieves over the AWGN channel.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Noise parameter of the underlying rate-distortion solution.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Relative Frobenius residual of the defining factorization:
    /// `||T^{-1} T^{-T} sigma_w2 - K_Z*||_F / ||K_Z*||_F`.
    pub fn factorization_residual(&self) -> Result<f64> {
        let t_inv = lower_triangular_inverse(&self.t)?;
        let realized = &t_inv * t_inv.transpose() * self.sigma_w2;
        Ok((&realized - self.target_noise.as_matrix()).norm()
            / self.target_noise.as_matrix().norm())
    }

    fn validate(&self) -> Result<()> {
        let n = self.t.nrows();
        if self.t.ncols() != n || self.target_noise.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "transform design",
                expected: n,
                actual: self.target_noise.dim(),
            });
        }
        check_positive("sigma_w2", self.sigma_w2)?;
        check_positive("design distortion", self.distortion)?;
        check_positive("design alpha", self.alpha)?;
        for i in 0..n {
            if self.t[(i, i)] <= 0.0 {
                return Err(Error::invalid(format!(
                    "transform diagonal entry {i} must be strictly positive"
                )));
            }
            for j in (i + 1)..n {
                if self.t[(i, j)] != 0.0 {
                    return Err(Error::invalid(
                        "transform matrix must be lower triangular",
                    ));
                }
            }
        }
        let residual = self.factorization_residual()?;
        if residual > MATRIX_RESIDUAL_TOL {
            return Err(Error::DesignCheckFailed {
                context: "transform factorization",
                residual,
                tolerance: MATRIX_RESIDUAL_TOL,
            });
        }
        Ok(())
    }
}

/// Synthesizes the causal transform coder for a positive definite source
/// covariance at per-dimension distortion `d` with AWGN variance `sigma_w2`.
///
/// `T` is the inverse of the lower Cholesky factor of `K_Z*/sigma_w2`, so
/// the channel noise, mapped back through `T^{-1}`, is colored to exactly the
/// optimal distortion covariance.
pub fn design_causal_transform(
    k_x: &CovarianceMatrix,
    d: f64,
    sigma_w2: f64,
) -> Result<TransformDesign> {
    check_positive("sigma_w2", sigma_w2)?;
    let (point, k_z) = vector_uncorr_rdf(k_x, d)?;
    let c = cholesky_lower(&(k_z.as_matrix() / sigma_w2))?;
    let t = lower_triangular_inverse(&c)?;
    let design = TransformDesign {
        t,
        sigma_w2,
        target_noise: k_z,
        rate_bits: point.rate_bits,
        distortion: point.distortion,
        alpha: point.parameter,
    };
    design.validate()?;
    Ok(design)
}

// ---------------------------------------------------------------------------
// Error-feedback transform design
// ---------------------------------------------------------------------------

/// The error-feedback transform coder `(A, F, D)`.
///
/// Encoding: `u = A x`; coordinates are sent in causal order, subtracting
/// feedback of *past channel errors* through the strictly-lower-triangular
/// `F` before each use of the channel. The channel outputs are mutually
/// uncorrelated with variances `channel_variances()`, so per-channel coding
/// is optimal; decoding is `y = A^{-1} u-hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeedbackTransformDesignData", into = "FeedbackTransformDesignData")]
pub struct FeedbackTransformDesign {
    a: DMatrix<f64>,
    f: DMatrix<f64>,
    ddiag: DVector<f64>,
    sigma_w2: f64,
    target_noise: CovarianceMatrix,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
}

/// Serialized form of [`FeedbackTransformDesign`] (matrices row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeedbackTransformDesignData {
    dim: usize,
    a: Vec<f64>,
    f: Vec<f64>,
    ddiag: Vec<f64>,
    sigma_w2: f64,
    target_noise: CovarianceMatrix,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
}

impl TryFrom<FeedbackTransformDesignData> for FeedbackTransformDesign {
    type Error = Error;
    fn try_from(data: FeedbackTransformDesignData) -> Result<Self> {
        let a = matrix_from_rows(data.dim, &data.a, "feedback design A")?;
        let f = matrix_from_rows(data.dim, &data.f, "feedback design F")?;
        if data.ddiag.len() != data.dim {
            return Err(Error::DimensionMismatch {
                context: "feedback design channel variances",
                expected: data.dim,
                actual: data.ddiag.len(),
            });
        }
        let design = FeedbackTransformDesign {
            a,
            f,
            ddiag: DVector::from_vec(data.ddiag),
            sigma_w2: data.sigma_w2,
            target_noise: data.target_noise,
            rate_bits: data.rate_bits,
            distortion: data.distortion,
            alpha: data.alpha,
        };
        design.validate()?;
        Ok(design)
    }
}

impl From<FeedbackTransformDesign> for FeedbackTransformDesignData {
    fn from(d: FeedbackTransformDesign) -> Self {
        FeedbackTransformDesignData {
            dim: d.a.nrows(),
            a: matrix_to_rows(&d.a),
            f: matrix_to_rows(&d.f),
            ddiag: d.ddiag.iter().cloned().collect(),
            sigma_w2: d.sigma_w2,
            target_noise: d.target_noise,
            rate_bits: d.rate_bits,
            distortion: d.distortion,
            alpha: d.alpha,
        }
    }
}

impl FeedbackTransformDesign {
    /// Block dimension.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Lower-triangular analysis transform `A`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Strictly-lower-triangular error feedback `F` (zero diagonal).
    pub fn feedback(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Designed channel output variances, one per coordinate.
    pub fn channel_variances(&self) -> &DVector<f64> {
        &self.ddiag
    }

    /// AWGN channel variance the design assumes.
    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    /// The optimal distortion covariance this design realizes.
    pub fn target_noise_covariance(&self) -> &CovarianceMatrix {
        &self.target_noise
    }

    /// Design rate in bits per dimension: the per-channel sum
    /// `(1/2N) sum_k log2(D_k / sigma_w2)`.
    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    /// Per-dimension distortion the design achieves over the AWGN channel.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Noise parameter of the underlying rate-distortion solution.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Relative residual of the feedback consistency identity
    /// `(I-F)(I-F)^T = A K_Z* A^T / sigma_w2`.
    pub fn feedback_residual(&self) -> f64 {
        let n = self.dim();
        let i_minus_f = DMatrix::identity(n, n) - &self.f;
        let lhs = &i_minus_f * i_minus_f.transpose();
        let rhs = &self.a * self.target_noise.as_matrix() * self.a.transpose() / self.sigma_w2;
        (&lhs - &rhs).norm() / lhs.norm()
    }

    /// Relative off-diagonal Frobenius mass of the channel output covariance
    /// `K_U-hat = A K_X A^T + sigma_w2 (I-F)(I-F)^T` for the given source:
    /// zero means the feedback perfectly whitens the channel outputs.
    pub fn whitening_residual(&self, k_x: &CovarianceMatrix) -> Result<f64> {
        let n = self.dim();
        if k_x.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "whitening residual source",
                expected: n,
                actual: k_x.dim(),
            });
        }
        let i_minus_f = DMatrix::identity(n, n) - &self.f;
        let k_uhat = &self.a * k_x.as_matrix() * self.a.transpose()
            + self.sigma_w2 * &i_minus_f * i_minus_f.transpose();
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += k_uhat[(i, j)] * k_uhat[(i, j)];
                }
            }
        }
        Ok(off.sqrt() / k_uhat.norm())
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.f.nrows() != n || self.f.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "feedback design",
                expected: n,
                actual: self.f.nrows(),
            });
        }
        if self.target_noise.dim() != n || self.ddiag.len() != n {
            return Err(Error::DimensionMismatch {
                context: "feedback design",
                expected: n,
                actual: self.target_noise.dim(),
            });
        }
        check_positive("sigma_w2", self.sigma_w2)?;
        check_positive("design distortion", self.distortion)?;
        check_positive("design alpha", self.alpha)?;
        for i in 0..n {
            if self.a[(i, i)] <= 0.0 {
                return Err(Error::invalid(format!(
                    "transform diagonal entry {i} must be strictly positive"
                )));
            }
            if self.ddiag[i] <= 0.0 {
                return Err(Error::invalid(format!(
                    "channel variance {i} must be strictly positive"
                )));
            }
            if self.f[(i, i)] != 0.0 {
                return Err(Error::invalid(
                    "feedback matrix must have an exactly zero diagonal",
                ));
            }
            for j in (i + 1)..n {
                if self.a[(i, j)] != 0.0 || self.f[(i, j)] != 0.0 {
                    return Err(Error::invalid(
                        "feedback design matrices must be lower triangular",
                    ));
                }
            }
        }
        let residual = self.feedback_residual();
        if residual > MATRIX_RESIDUAL_TOL {
            return Err(Error::DesignCheckFailed {
                context: "feedback consistency",
                residual,
                tolerance: MATRIX_RESIDUAL_TOL,
            });
        }
        let channel_sum = self
            .ddiag
            .iter()
            .map(|&dk| 0.5 * (dk / self.sigma_w2).log2())
            .sum::<f64>()
            / n as f64;
        let drift = (channel_sum - self.rate_bits).abs();
        if drift > RATE_IDENTITY_TOL {
            return Err(Error::DesignCheckFailed {
                context: "per-channel rate sum",
                residual: drift,
                tolerance: RATE_IDENTITY_TOL,
            });
        }
        Ok(())
    }
}

/// Synthesizes the error-feedback transform coder.
///
/// Construction: with `L` the lower Cholesky factor of the optimal distortion
/// covariance, factor `L^{-1} K_X L^{-T} + I = L' Delta L'^T` (unit-diagonal
/// LDL); then `I - F = L'^{-1}`, `A = sigma_w (I-F) L^{-1}`, and the channel
/// variances are `sigma_w2 * Delta`. The per-channel rate sum then equals
/// the vector-form uncorrelated-distortion rate (checked to `1e-8`).
pub fn design_feedback_transform(
    k_x: &CovarianceMatrix,
    d: f64,
    sigma_w2: f64,
) -> Result<FeedbackTransformDesign> {
    check_positive("sigma_w2", sigma_w2)?;
    let (point, k_z) = vector_uncorr_rdf(k_x, d)?;
    let n = k_x.dim();
    let l = cholesky_lower(k_z.as_matrix())?;
    let l_inv = lower_triangular_inverse(&l)?;
    let m = &l_inv * k_x.as_matrix() * l_inv.transpose() + DMatrix::identity(n, n);
    let m = 0.5 * (&m + m.transpose());
    let (l_prime, delta) = unit_ldl(&m)?;
    let i_minus_f = lower_triangular_inverse(&l_prime)?;
    let mut f = DMatrix::identity(n, n) - &i_minus_f;
    for i in 0..n {
        f[(i, i)] = 0.0;
    }
    let a = sigma_w2.sqrt() * &i_minus_f * &l_inv;
    let ddiag = delta * sigma_w2;
    let rate_bits = ddiag
        .iter()
        .map(|&dk| 0.5 * (dk / sigma_w2).log2())
        .sum::<f64>()
        / n as f64;
    if (rate_bits - point.rate_bits).abs() > RATE_IDENTITY_TOL {
        return Err(Error::DesignCheckFailed {
            context: "feedback design rate identity",
            residual: (rate_bits - point.rate_bits).abs(),
            tolerance: RATE_IDENTITY_TOL,
        });
    }
    let design = FeedbackTransformDesign {
        a,
        f,
        ddiag,
        sigma_w2,
        target_noise: k_z,
        rate_bits,
        distortion: point.distortion,
        alpha: point.parameter,
    };
    design.validate()?;
    Ok(design)
}

// ---------------------------------------------------------------------------
// Noise-shaping filter design
// ---------------------------------------------------------------------------

/// The stationary noise-shaping coder: FIR pre-filter `a`, strictly causal
/// noise feedback `f` (`f[0] = 0`), and causal reconstruction filter `a_inv`.
///
/// Loop structure per sample: `v = (a * x) - (f * w)` where `w` are past
/// channel errors, the channel adds `w` (AWGN of variance `sigma_w2` or a
/// dithered quantizer error of the same variance), and the reconstruction is
/// `y = a_inv * u-hat`. The channel input power spectrum is flat at
/// `sigma_u2` and the reconstruction error spectrum equals the optimal
/// distortion spectrum stored in `target_noise_psd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseShaperDesignData", into = "NoiseShaperDesignData")]
pub struct NoiseShaperDesign {
    a: Vec<f64>,
    a_inv: Vec<f64>,
    f: Vec<f64>,
    sigma_w2: f64,
    sigma_u2: f64,
    target_noise_psd: PsdGrid,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
    bode_residual: f64,
}

/// Serialized form of [`NoiseShaperDesign`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NoiseShaperDesignData {
    a: Vec<f64>,
    a_inv: Vec<f64>,
    f: Vec<f64>,
    sigma_w2: f64,
    sigma_u2: f64,
    target_noise_psd: PsdGrid,
    rate_bits: f64,
    distortion: f64,
    alpha: f64,
}

impl TryFrom<NoiseShaperDesignData> for NoiseShaperDesign {
    type Error = Error;
    fn try_from(data: NoiseShaperDesignData) -> Result<Self> {
        let grid_size = data.target_noise_psd.grid_size();
        let one_minus_f = one_minus_f_fir(&data.f);
        let bode_residual = bode_integral(&one_minus_f, grid_size);
        let design = NoiseShaperDesign {
            a: data.a,
            a_inv: data.a_inv,
            f: data.f,
            sigma_w2: data.sigma_w2,
            sigma_u2: data.sigma_u2,
            target_noise_psd: data.target_noise_psd,
            rate_bits: data.rate_bits,
            distortion: data.distortion,
            alpha: data.alpha,
            bode_residual,
        };
        design.validate()?;
        Ok(design)
    }
}

impl From<NoiseShaperDesign> for NoiseShaperDesignData {
    fn from(d: NoiseShaperDesign) -> Self {
        NoiseShaperDesignData {
            a: d.a,
            a_inv: d.a_inv,
            f: d.f,
            sigma_w2: d.sigma_w2,
            sigma_u2: d.sigma_u2,
            target_noise_psd: d.target_noise_psd,
            rate_bits: d.rate_bits,
            distortion: d.distortion,
            alpha: d.alpha,
        }
    }
}

/// Coefficients of `1 - F(z)` given the feedback taps (with `f[0] = 0`).
fn one_minus_f_fir(f: &[f64]) -> Vec<f64> {
    let mut coeffs: Vec<f64> = f.iter().map(|&c| -c).collect();
    if coeffs.is_empty() {
        coeffs.push(1.0);
    } else {
        coeffs[0] = 1.0;
    }
    coeffs
}

impl NoiseShaperDesign {
    /// Pre-filter taps `a` (causal, `a[0] > 0`).
    pub fn pre_filter(&self) -> &[f64] {
        &self.a
    }

    /// Causal reconstruction filter approximating the inverse of the
    /// pre-filter.
    pub fn reconstruction_filter(&self) -> &[f64] {
        &self.a_inv
    }

    /// Noise feedback taps; `f[0] = 0` (only past errors are fed back).
    pub fn feedback_filter(&self) -> &[f64] {
        &self.f
    }

    /// Coefficients of `1 - F(z)` (monic by construction).
    pub fn one_minus_f(&self) -> Vec<f64> {
        one_minus_f_fir(&self.f)
    }

    /// Filter length shared by all three FIRs.
    pub fn fir_len(&self) -> usize {
        self.a.len()
    }

    /// AWGN channel variance the design assumes.
    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    /// Designed (white) channel output variance; the rate identity is
    /// `rate = log2(sigma_u2/sigma_w2)/2`.
    pub fn sigma_u2(&self) -> f64 {
        self.sigma_u2
    }

    /// The optimal distortion spectrum this design realizes, on the design
    /// grid.
    pub fn target_noise_psd(&self) -> &PsdGrid {
        &self.target_noise_psd
    }

    /// Design rate in bits per sample.
    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    /// Per-sample distortion the design achieves over the AWGN channel.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Noise parameter of the underlying rate-distortion solution.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Achieved Bode integral `(1/2pi) int ln|1-F| domega` (natural log);
    /// zero for an ideal monic minimum-phase feedback.
    pub fn bode_residual(&self) -> f64 {
        self.bode_residual
    }

    /// Relative L2 deviation of `|A|^2 S_X + |1-F|^2 sigma_w2` from the flat
    /// level `sigma_u2` on the source grid — how white the channel input
    /// really is for this source.
    pub fn whiteness_residual(&self, source_psd: &PsdGrid) -> Result<f64> {
        let g = source_psd.grid_size();
        let p_a = fir_power_response(&self.a, g);
        let p_mf = fir_power_response(&self.one_minus_f(), g);
        let combined: Vec<f64> = source_psd
            .values()
            .iter()
            .zip(p_a.iter().zip(&p_mf))
            .map(|(&s, (&pa, &pmf))| pa * s + pmf * self.sigma_w2)
            .collect();
        let flat = vec![self.sigma_u2; g];
        Ok(relative_l2(&combined, &flat))
    }

    /// Relative L2 deviation of the realized error shaping
    /// `|1-F|^2 sigma_w2 / |A|^2` from the optimal distortion spectrum.
    pub fn shaping_residual(&self) -> f64 {
        let g = self.target_noise_psd.grid_size();
        let p_a = fir_power_response(&self.a, g);
        let p_mf = fir_power_response(&self.one_minus_f(), g);
        let realized: Vec<f64> = p_a
            .iter()
            .zip(&p_mf)
            .map(|(&pa, &pmf)| pmf * self.sigma_w2 / pa)
            .collect();
        relative_l2(&realized, self.target_noise_psd.values())
    }

    fn validate(&self) -> Result<()> {
        let len = self.a.len();
        if len == 0 || self.a_inv.len() != len || self.f.len() != len {
            return Err(Error::DimensionMismatch {
                context: "noise shaper FIR lengths",
                expected: len.max(1),
                actual: self.a_inv.len().min(self.f.len()),
            });
        }
        check_positive("sigma_w2", self.sigma_w2)?;
        check_positive("sigma_u2", self.sigma_u2)?;
        check_positive("design distortion", self.distortion)?;
        check_positive("design alpha", self.alpha)?;
        if self.f[0] != 0.0 {
            return Err(Error::invalid(
                "feedback filter must be strictly causal (f[0] = 0)",
            ));
        }
        // The rate identity ties the stored white level to the stored rate.
        let implied = self.sigma_w2 * (2.0_f64).powf(2.0 * self.rate_bits);
        if (implied - self.sigma_u2).abs() > 1e-9 * self.sigma_u2 {
            return Err(Error::DesignCheckFailed {
                context: "white-level rate identity",
                residual: (implied - self.sigma_u2).abs() / self.sigma_u2,
                tolerance: 1e-9,
            });
        }
        // Distortion equals the mean of the target spectrum.
        let psd_mean = self.target_noise_psd.variance();
        if (psd_mean - self.distortion).abs() > 1e-9 * self.distortion {
            return Err(Error::DesignCheckFailed {
                context: "target spectrum distortion consistency",
                residual: (psd_mean - self.distortion).abs() / self.distortion,
                tolerance: 1e-9,
            });
        }
        for (name, coeffs) in [
            ("1-F", self.one_minus_f()),
            ("A", self.a.clone()),
            ("A^-1", self.a_inv.clone()),
        ] {
            if let Some(radius) = max_root_radius(&coeffs) {
                if radius > ROOT_RADIUS_MAX {
                    let _ = name;
                    return Err(Error::NotMinimumPhase {
                        max_root_radius: radius,
                    });
                }
            }
        }
        if self.bode_residual.abs() > BODE_TOL {
            return Err(Error::FirTooShort {
                fir_len: len,
                residual: self.bode_residual.abs(),
                tolerance: BODE_TOL,
            });
        }
        Ok(())
    }
}

/// Synthesizes the noise-shaping coder for a strictly positive source
/// spectrum at per-sample distortion `d` with channel variance `sigma_w2`.
///
/// The closed-form target magnitudes are, with `alpha` solved from `d` and
/// `t(omega) = sqrt(S_X + alpha) + sqrt(S_X)`:
///
/// * `|1 - F|^2 = (sigma_u2 / sigma_w2) * alpha / t^2`,
/// * `|A|^2 = 2 sigma_u2 / (sqrt(S_X) * t)`,
///
/// each spectrally factored into a minimum-phase FIR of length `fir_len`;
/// the reconstruction filter is the spectral factor of `1/|A|^2` (also
/// minimum phase, hence causal and stable). Requires `fir_len >= 8` and a
/// grid at least `64 * fir_len` fine so cepstral aliasing stays below the
/// Bode and root-radius tolerances.
pub fn design_noise_shaper(
    psd: &PsdGrid,
    d: f64,
    sigma_w2: f64,
    fir_len: usize,
) -> Result<NoiseShaperDesign> {
    check_positive("sigma_w2", sigma_w2)?;
    if fir_len < 8 {
        return Err(Error::invalid(format!(
            "noise shaper FIR length must be at least 8, got {fir_len}"
        )));
    }
    if !psd.is_strictly_positive() {
        return Err(Error::PsdNotStrictlyPositive {
            min_value: psd.min_value(),
        });
    }
    let g = psd.grid_size();
    if g < GRID_PER_TAP * fir_len {
        return Err(Error::invalid(format!(
            "grid size {g} too coarse for FIR length {fir_len}: \
             need at least {GRID_PER_TAP} grid points per tap \
             (G >= {})",
            GRID_PER_TAP * fir_len
        )));
    }
    let (point, s_z) = uncorr_at_distortion(psd, d)?;
    let alpha = point.parameter;
    let sigma_u2 = sigma_w2 * (2.0_f64).powf(2.0 * point.rate_bits);

    let mut target_one_minus_f = Vec::with_capacity(g);
    let mut target_a = Vec::with_capacity(g);
    let mut target_a_inv = Vec::with_capacity(g);
    for &s in psd.values() {
        let t = (s + alpha).sqrt() + s.sqrt();
        target_one_minus_f.push((sigma_u2 / sigma_w2) * alpha / (t * t));
        let a2 = 2.0 * sigma_u2 / (s.sqrt() * t);
        target_a.push(a2);
        target_a_inv.push(1.0 / a2);
    }
    let raw_one_minus_f =
        min_phase_spectral_factor(&PsdGrid::new(target_one_minus_f)?, fir_len)?;
    let a = min_phase_spectral_factor(&PsdGrid::new(target_a)?, fir_len)?;
    let a_inv = min_phase_spectral_factor(&PsdGrid::new(target_a_inv)?, fir_len)?;

    // Normalize the feedback factor to be exactly monic; the leading
    // coefficient is exp(Bode integral) ~ 1 already, and the feedback taps
    // are defined relative to a unit direct path.
    let lead = raw_one_minus_f[0];
    if !(lead.is_finite() && lead > 0.0) {
        return Err(Error::DesignCheckFailed {
            context: "feedback factor leading coefficient",
            residual: lead,
            tolerance: 0.0,
        });
    }
    let mut f: Vec<f64> = raw_one_minus_f.iter().map(|&c| -c / lead).collect();
    f[0] = 0.0;

    let bode_residual = bode_integral(&one_minus_f_fir(&f), g);
    let design = NoiseShaperDesign {
        a,
        a_inv,
        f,
        sigma_w2,
        sigma_u2,
        target_noise_psd: s_z,
        rate_bits: point.rate_bits,
        distortion: point.distortion,
        alpha,
        bode_residual,
    };
    design.validate()?;
    Ok(design)
}
