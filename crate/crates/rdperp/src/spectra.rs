//! Source descriptions in the frequency and covariance domains.
//!
//! Stationary Gaussian sources enter the crate in one of three forms:
//!
//! * a power spectral density sampled on a uniform grid over `[-pi, pi)`
//!   ([`PsdGrid`]),
//! * an autoregressive model ([`ArModel`]), which can be rendered onto a
//!   grid, or
//! * a covariance matrix of a finite block ([`CovarianceMatrix`]).
//!
//! Frequency-domain integrals are taken as grid means: on a uniform periodic
//! grid the trapezoid rule coincides with the plain mean of the samples, so
//! `variance == values.mean()`. Conversions between the forms live here:
//! [`ar_to_psd`], [`psd_to_covariance`], and the symmetric positive
//! semidefinite square root [`spd_matrix_sqrt`] used by block samplers.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for accepting nearly-symmetric input (PSD grids and
/// covariance matrices); accepted input is then symmetrized exactly.
const SYMMETRY_REL_TOL: f64 = 1e-6;

/// Negative PSD values larger in magnitude than this (relative to the grid
/// maximum) are rejected; smaller ones are treated as rounding noise and
/// clamped to zero.
const NEGATIVE_CLAMP_REL_TOL: f64 = 1e-9;

/// Eigenvalues below `-1e-10 * max_eigenvalue` mean "not positive
/// semidefinite"; anything in `[-tol, 0)` is clamped to zero.
const PSD_EIGENVALUE_REL_TOL: f64 = 1e-10;

/// Relative Frobenius tolerance for the square-root self check
/// `||S*S - K||_F <= tol * ||K||_F`.
const SQRT_RESIDUAL_REL_TOL: f64 = 1e-10;

/// Autoregressive roots must satisfy `|z| < 1 - STABILITY_MARGIN`.
const STABILITY_MARGIN: f64 = 1e-9;

// ---------------------------------------------------------------------------
// PsdGrid
// ---------------------------------------------------------------------------

/// The canonical frequency grid: `omega_k = -pi + 2*pi*k/g` for `k in 0..g`.
pub fn canonical_omegas(grid_size: usize) -> Vec<f64> {
    let g = grid_size as f64;
    (0..grid_size)
        .map(|k| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (k as f64) / g)
        .collect()
}

/// A two-sided power spectral density sampled on the canonical uniform grid.
///
/// Invariants (enforced at construction):
/// * the grid size is even and at least 2;
/// * all values are finite and non-negative;
/// * the values are even-symmetric: `S(-omega) = S(omega)`, i.e.
///   `values[k] == values[g - k]` for `k >= 1` (index 0 sits at `-pi` and is
///   self-paired through periodicity).
///
/// Nearly-symmetric input (relative asymmetry up to `1e-6`) is accepted and
/// symmetrized exactly by averaging mirror bins, so estimated spectra survive
/// round-tripping through text files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PsdGridData", into = "PsdGridData")]
pub struct PsdGrid {
    omegas: Vec<f64>,
    values: Vec<f64>,
}

/// Serialized form of [`PsdGrid`]: the omegas are canonical, so only the
/// values are stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PsdGridData {
    values: Vec<f64>,
}

impl TryFrom<PsdGridData> for PsdGrid {
    type Error = Error;
    fn try_from(data: PsdGridData) -> Result<Self> {
        PsdGrid::new(data.values)
    }
}

impl From<PsdGrid> for PsdGridData {
    fn from(grid: PsdGrid) -> Self {
        PsdGridData {
            values: grid.values,
        }
    }
}

impl PsdGrid {
    /// Builds a grid from samples over the canonical frequencies, validating
    /// and exactly symmetrizing them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let g = values.len();
        if g < 2 || g % 2 != 0 {
            return Err(Error::invalid(format!(
                "PSD grid size must be even and at least 2, got {g}"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "PSD grid contains a non-finite value: {bad}"
            )));
        }
        let max = values.iter().cloned().fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return Err(Error::invalid(
                "PSD grid must contain at least one positive value",
            ));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -NEGATIVE_CLAMP_REL_TOL * max {
            return Err(Error::invalid(format!(
                "PSD grid contains a negative value {min:e} \
                 (more negative than rounding noise {:e})",
                -NEGATIVE_CLAMP_REL_TOL * max
            )));
        }
        let mut values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        // Check and enforce even symmetry: bin k pairs with bin g - k.
        for k in 1..g / 2 {
            let a = values[k];
            let b = values[g - k];
            if (a - b).abs() > SYMMETRY_REL_TOL * max {
                return Err(Error::invalid(format!(
                    "PSD grid is not even-symmetric: bins {k} and {} differ \
                     by {:e} (values {a} vs {b})",
                    g - k,
                    (a - b).abs()
                )));
            }
            let avg = 0.5 * (a + b);
            values[k] = avg;
            values[g - k] = avg;
        }
        Ok(PsdGrid {
            omegas: canonical_omegas(g),
            values,
        })
    }

    /// Builds a flat (white) spectrum with the given per-sample variance.
    pub fn flat(variance: f64, grid_size: usize) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(format!(
                "white spectrum variance must be positive and finite, got {variance}"
            )));
        }
        PsdGrid::new(vec![variance; grid_size])
    }

    /// Number of grid points.
    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    /// Frequencies, uniform over `[-pi, pi)`.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Spectrum samples aligned with [`Self::omegas`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Process variance: the mean of the grid values (the trapezoid rule and
    /// the plain mean coincide on a uniform periodic grid).
    pub fn variance(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest grid value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest grid value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Whether every bin is strictly positive. Filter synthesis requires this.
    pub fn is_strictly_positive(&self) -> bool {
        self.min_value() > 0.0
    }

    /// Applies `f` to every value, returning a new validated grid. Intended
    /// for spectral arithmetic (e.g. forming a target noise spectrum); the
    /// result must still be a valid spectrum.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        PsdGrid::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Writes the grid as CSV with header `omega,psd`, one row per bin.
    pub fn to_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega,psd")?;
        for (omega, value) in self.omegas.iter().zip(&self.values) {
            writeln!(out, "{omega},{value}")?;
        }
        Ok(())
    }

    /// Reads a grid written by [`Self::to_csv`], validating the header, the
    /// frequency column against the canonical grid, and the values.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut rows: Vec<f64> = Vec::new();
        let mut omegas: Vec<f64> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if idx == 0 {
                if line != "omega,psd" {
                    return Err(Error::CsvFormat {
                        line: 1,
                        message: format!("expected header 'omega,psd', got '{line}'"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |field: Option<&str>, name: &str| -> Result<f64> {
                field
                    .ok_or_else(|| Error::CsvFormat {
                        line: idx + 1,
                        message: format!("missing {name} column"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::CsvFormat {
                        line: idx + 1,
                        message: format!("cannot parse {name}: {e}"),
                    })
            };
            omegas.push(parse(parts.next(), "omega")?);
            rows.push(parse(parts.next(), "psd")?);
            if parts.next().is_some() {
                return Err(Error::CsvFormat {
                    line: idx + 1,
                    message: "expected exactly two columns".into(),
                });
            }
        }
        let g = rows.len();
        if g < 2 || g % 2 != 0 {
            return Err(Error::CsvFormat {
                line: g + 1,
                message: format!("PSD grid size must be even and at least 2, got {g} rows"),
            });
        }
        let canonical = canonical_omegas(g);
        for (i, (got, want)) in omegas.iter().zip(&canonical).enumerate() {
            if (got - want).abs() > 1e-6 {
                return Err(Error::CsvFormat {
                    line: i + 2,
                    message: format!(
                        "omega column must follow the uniform grid over [-pi, pi): \
                         expected {want}, got {got}"
                    ),
                });
            }
        }
        PsdGrid::new(rows)
    }
}

// ---------------------------------------------------------------------------
// ArModel
// ---------------------------------------------------------------------------

/// A stable autoregressive model
/// `x[t] = sum_m coeffs[m] * x[t-1-m] + e[t]`, `e ~ N(0, innovation_variance)`.
///
/// Stability (all characteristic roots strictly inside the unit circle) is
/// checked at construction via the companion-matrix eigenvalues; an empty
/// coefficient list is the white-noise special case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArModelData", into = "ArModelData")]
pub struct ArModel {
    coeffs: Vec<f64>,
    innovation_variance: f64,
}

/// Serialized form of [`ArModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArModelData {
    coeffs: Vec<f64>,
    innovation_variance: f64,
}

impl TryFrom<ArModelData> for ArModel {
    type Error = Error;
    fn try_from(data: ArModelData) -> Result<Self> {
        ArModel::new(data.coeffs, data.innovation_variance)
    }
}

impl From<ArModel> for ArModelData {
    fn from(model: ArModel) -> Self {
        ArModelData {
            coeffs: model.coeffs,
            innovation_variance: model.innovation_variance,
        }
    }
}

impl ArModel {
    /// Validates coefficients and innovation variance and checks stability.
    pub fn new(coeffs: Vec<f64>, innovation_variance: f64) -> Result<Self> {
        if !(innovation_variance.is_finite() && innovation_variance > 0.0) {
            return Err(Error::invalid(format!(
                "innovation variance must be positive and finite, got {innovation_variance}"
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "autoregressive coefficients must all be finite",
            ));
        }
        let model = ArModel {
            coeffs,
            innovation_variance,
        };
        let mut magnitudes = model.root_magnitudes();
        magnitudes.sort_by(|a, b| b.partial_cmp(a).expect("magnitudes are finite"));
        if magnitudes.first().is_some_and(|&m| m >= 1.0 - STABILITY_MARGIN) {
            return Err(Error::UnstableArModel {
                root_magnitudes: magnitudes,
            });
        }
        Ok(model)
    }

    /// Regression coefficients (possibly empty for white noise).
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Variance of the driving white noise.
    pub fn innovation_variance(&self) -> f64 {
        self.innovation_variance
    }

    /// Model order (number of coefficients).
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Magnitudes of the characteristic roots (empty for white noise),
    /// computed as eigenvalues of the companion matrix of
    /// `z^p - coeffs[0] z^(p-1) - ... - coeffs[p-1]`.
    fn root_magnitudes(&self) -> Vec<f64> {
        let p = self.coeffs.len();
        if p == 0 {
            return Vec::new();
        }
        let mut companion = DMatrix::<f64>::zeros(p, p);
        for (j, &c) in self.coeffs.iter().enumerate() {
            companion[(0, j)] = c;
        }
        for i in 1..p {
            companion[(i, i - 1)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect()
    }
}

/// Renders the model spectrum `S(omega) = sigma_e^2 / |1 - A(e^{-i omega})|^2`
/// on the canonical grid, where `A` is the regression polynomial.
pub fn ar_to_psd(model: &ArModel, grid_size: usize) -> Result<PsdGrid> {
    if grid_size < 2 || grid_size % 2 != 0 {
        return Err(Error::invalid(format!(
            "grid size must be even and at least 2, got {grid_size}"
        )));
    }
    let omegas = canonical_omegas(grid_size);
    let values = omegas
        .iter()
        .map(|&omega| {
            // 1 - sum_m coeffs[m] e^{-i (m+1) omega}, evaluated by Horner's
            // rule in w = e^{-i omega}.
            let (cos_w, sin_w) = (omega.cos(), -omega.sin());
            let (mut re, mut im) = (0.0_f64, 0.0_f64);
            for &c in model.coeffs.iter().rev() {
                let (nre, nim) = (
                    (re + c) * cos_w - im * sin_w,
                    (re + c) * sin_w + im * cos_w,
                );
                re = nre;
                im = nim;
            }
            let (dre, dim) = (1.0 - re, -im);
            model.innovation_variance / (dre * dre + dim * dim)
        })
        .collect();
    PsdGrid::new(values)
}

// ---------------------------------------------------------------------------
// CovarianceMatrix
// ---------------------------------------------------------------------------

/// A finite, symmetric covariance matrix with non-negative diagonal.
///
/// Zero diagonal entries are allowed (a coordinate with no variance, as
/// produced by singular sources). Positive semidefiniteness is not verified
/// at construction (it costs an eigendecomposition); operations that require
/// it check as they factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceMatrixData", into = "CovarianceMatrixData")]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
}

/// Serialized form of [`CovarianceMatrix`]: dimension plus row-major entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CovarianceMatrixData {
    dim: usize,
    /// Row-major entries, length `dim * dim`.
    data: Vec<f64>,
}

impl TryFrom<CovarianceMatrixData> for CovarianceMatrix {
    type Error = Error;
    fn try_from(data: CovarianceMatrixData) -> Result<Self> {
        if data.data.len() != data.dim * data.dim {
            return Err(Error::DimensionMismatch {
                context: "covariance matrix data",
                expected: data.dim * data.dim,
                actual: data.data.len(),
            });
        }
        CovarianceMatrix::new(DMatrix::from_row_slice(data.dim, data.dim, &data.data))
    }
}

impl From<CovarianceMatrix> for CovarianceMatrixData {
    fn from(k: CovarianceMatrix) -> Self {
        let dim = k.dim();
        let data = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| k.matrix[(i, j)])
            .collect();
        CovarianceMatrixData { dim, data }
    }
}

impl CovarianceMatrix {
    /// Validates shape, finiteness, symmetry (within rounding) and a strictly
    /// positive diagonal; stores the exactly symmetrized matrix.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "covariance matrix",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::invalid("covariance matrix must be non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "covariance matrix contains a non-finite entry",
            ));
        }
        if let Some(i) = (0..matrix.nrows()).find(|&i| matrix[(i, i)] < 0.0) {
            return Err(Error::invalid(format!(
                "covariance diagonal entry {i} must be non-negative, got {}",
                matrix[(i, i)]
            )));
        }
        let scale = matrix
            .diagonal()
            .iter()
            .cloned()
            .fold(f64::MIN_POSITIVE, f64::max);
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_REL_TOL * scale {
                    return Err(Error::invalid(format!(
                        "covariance matrix is not symmetric at ({i}, {j}): \
                         {} vs {}",
                        matrix[(i, j)],
                        matrix[(j, i)]
                    )));
                }
            }
        }
        let symmetrized = 0.5 * (&matrix + matrix.transpose());
        Ok(CovarianceMatrix {
            matrix: symmetrized,
        })
    }

    /// Block dimension.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The underlying symmetric matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Per-dimension variance: `trace / dim`. This is the natural scale for
    /// per-dimension distortion targets.
    pub fn trace_mean(&self) -> f64 {
        self.matrix.trace() / self.dim() as f64
    }

    /// Eigenvalues in ascending order (symmetric eigendecomposition).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eigs: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
        eigs
    }
}

/// Truncates a spectrum to the covariance of a block of `n` consecutive
/// samples: a Toeplitz matrix of the autocovariances
/// `r[m] = (1/G) * sum_k S(omega_k) cos(m * omega_k)`.
///
/// Requires `n <= G/4` so the grid resolves every retained lag.
pub fn psd_to_covariance(psd: &PsdGrid, n: usize) -> Result<CovarianceMatrix> {
    if n == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let g = psd.grid_size();
    if n > g / 4 {
        return Err(Error::invalid(format!(
            "block size {n} too large for grid size {g}: need n <= G/4 \
             so the grid resolves every retained lag"
        )));
    }
    let autocov: Vec<f64> = (0..n)
        .map(|m| {
            psd.omegas()
                .iter()
                .zip(psd.values())
                .map(|(&omega, &s)| s * (m as f64 * omega).cos())
                .sum::<f64>()
                / g as f64
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| autocov[i.abs_diff(j)]);
    CovarianceMatrix::new(matrix)
}

/// Symmetric positive semidefinite square root via eigendecomposition.
///
/// Eigenvalues in `[-1e-10 * max_eig, 0)` are treated as rounding noise and
/// clamped to zero; anything more negative is rejected. The result satisfies
/// `||S*S - K||_F <= 1e-10 * ||K||_F` (verified before returning).
pub fn spd_matrix_sqrt(k: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    let eig = k.as_matrix().clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = -PSD_EIGENVALUE_REL_TOL * max_eig.max(0.0);
    let mut clamped = eig.eigenvalues.clone();
    for (i, lambda) in clamped.iter_mut().enumerate() {
        if *lambda < floor {
            return Err(Error::NotPositiveDefinite {
                pivot: i,
                value: *lambda,
            });
        }
        *lambda = lambda.max(0.0);
    }
    let sqrt_diag = DVector::from_iterator(clamped.len(), clamped.iter().map(|l| l.sqrt()));
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_diag) * eig.eigenvectors.transpose();
    let root = 0.5 * (&root + root.transpose());
    let residual = (&root * &root - k.as_matrix()).norm();
    let tolerance = SQRT_RESIDUAL_REL_TOL * k.as_matrix().norm();
    if residual > tolerance {
        return Err(Error::DesignCheckFailed {
            context: "symmetric matrix square root",
            residual,
            tolerance,
        });
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ar1(a: f64) -> ArModel {
        ArModel::new(vec![a], 1.0).expect("stable first-order model")
    }

    #[test]
    fn canonical_grid_spans_minus_pi_inclusive_to_pi_exclusive() {
        let omegas = canonical_omegas(8);
        assert_relative_eq!(omegas[0], -std::f64::consts::PI);
        assert_relative_eq!(omegas[4], 0.0);
        assert!(
            *omegas.last().unwrap() < std::f64::consts::PI,
            "pi itself must not be on the grid"
        );
    }

    #[test]
    fn first_order_model_variance_matches_closed_form() {
        // Stationary variance of x[t] = a x[t-1] + e[t] is sigma_e^2/(1-a^2);
        // the grid mean converges to it spectrally fast in the grid size.
        let psd = ar_to_psd(&ar1(0.9), 4096).unwrap();
        assert_relative_eq!(psd.variance(), 5.263157894736843, max_relative = 1e-12);
        let psd = ar_to_psd(&ar1(0.5), 4096).unwrap();
        assert_relative_eq!(psd.variance(), 1.3333333333333335, max_relative = 1e-12);
    }

    #[test]
    fn first_order_psd_peaks_at_zero_frequency_for_positive_coefficient() {
        let psd = ar_to_psd(&ar1(0.9), 512).unwrap();
        let g = psd.grid_size();
        assert_relative_eq!(psd.values()[g / 2], 1.0 / (0.1_f64 * 0.1), max_relative = 1e-12);
        assert_relative_eq!(psd.values()[0], 1.0 / (1.9_f64 * 1.9), max_relative = 1e-12);
    }

    #[test]
    fn white_model_renders_flat_spectrum() {
        let model = ArModel::new(vec![], 2.5).unwrap();
        let psd = ar_to_psd(&model, 64).unwrap();
        for &v in psd.values() {
            assert_eq!(v, 2.5, "white spectrum must be exactly flat");
        }
    }

    #[test]
    fn unstable_models_are_rejected_with_root_magnitudes() {
        let err = ArModel::new(vec![1.0], 1.0).expect_err("random walk is not stationary");
        match err {
            Error::UnstableArModel { root_magnitudes } => {
                assert_relative_eq!(root_magnitudes[0], 1.0, max_relative = 1e-9);
            }
            other => panic!("expected UnstableArModel, got {other:?}"),
        }
        // Complex-conjugate roots with |z|^2 = 0.9 < 1: stable.
        assert!(ArModel::new(vec![1.5, -0.9], 1.0).is_ok());
        // Coefficients summing above 1 put a real root beyond z = 1.
        assert!(
            ArModel::new(vec![0.6, 0.3, 0.2], 1.0).is_err(),
            "explosive third-order model must be rejected"
        );
    }

    #[test]
    fn second_order_stability_boundary_is_detected() {
        // For x[t] = a1 x[t-1] + a2 x[t-2], stability requires a2 > -1,
        // a2 < 1 - a1, a2 < 1 + a1. Pick a point just outside.
        assert!(ArModel::new(vec![0.5, 0.5], 1.0).is_err(), "a1 + a2 = 1 is a unit root");
        assert!(ArModel::new(vec![0.5, 0.49], 1.0).is_ok());
    }

    #[test]
    fn psd_rejects_odd_sizes_negatives_and_asymmetry() {
        assert!(PsdGrid::new(vec![1.0; 7]).is_err(), "odd grid must be rejected");
        assert!(
            PsdGrid::new(vec![1.0, -0.5, 1.0, 0.5]).is_err(),
            "clearly negative bin must be rejected"
        );
        let mut values = vec![1.0; 8];
        values[1] = 2.0; // mirror bin 7 stays 1.0
        assert!(
            PsdGrid::new(values).is_err(),
            "asymmetric grid must be rejected"
        );
        // Tiny negatives are rounding noise and get clamped.
        let grid = PsdGrid::new(vec![1.0, -1e-12, 1.0, -1e-12]).unwrap();
        assert!(grid.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn psd_symmetrizes_near_symmetric_input_exactly() {
        let mut values = vec![1.0; 8];
        values[1] = 1.0 + 3e-7;
        values[7] = 1.0 - 3e-7;
        let grid = PsdGrid::new(values).unwrap();
        assert_eq!(
            grid.values()[1], grid.values()[7],
            "mirror bins must match exactly after symmetrization"
        );
    }

    #[test]
    fn covariance_of_first_order_model_matches_closed_form() {
        let psd = ar_to_psd(&ar1(0.9), 4096).unwrap();
        let k = psd_to_covariance(&psd, 8).unwrap();
        assert_relative_eq!(k.as_matrix()[(0, 0)], 5.263157894736843, max_relative = 1e-10);
        assert_relative_eq!(k.as_matrix()[(0, 1)], 4.736842105263159, max_relative = 1e-10);
        // Toeplitz structure: constant along diagonals.
        assert_eq!(k.as_matrix()[(2, 3)], k.as_matrix()[(0, 1)]);
        assert_eq!(k.as_matrix()[(5, 1)], k.as_matrix()[(4, 0)]);
    }

    #[test]
    fn psd_to_covariance_enforces_grid_headroom() {
        let psd = ar_to_psd(&ar1(0.5), 64).unwrap();
        assert!(psd_to_covariance(&psd, 16).is_ok());
        assert!(
            psd_to_covariance(&psd, 17).is_err(),
            "block size above G/4 must be rejected"
        );
    }

    #[test]
    fn covariance_rejects_asymmetric_and_negative_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.2, 1.0]);
        assert!(CovarianceMatrix::new(m).is_err(), "asymmetric matrix must be rejected");
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(
            CovarianceMatrix::new(m).is_err(),
            "negative diagonal entry must be rejected"
        );
        // A zero-variance coordinate is legal (singular but PSD).
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(
            CovarianceMatrix::new(m).is_ok(),
            "zero diagonal entry is a valid degenerate covariance"
        );
    }

    #[test]
    fn matrix_sqrt_squares_back_and_rejects_indefinite_input() {
        let k = CovarianceMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[2.0, 1.0, 1.0, 2.0],
        ))
        .unwrap();
        let s = spd_matrix_sqrt(&k).unwrap();
        let back = &s * &s;
        assert_relative_eq!(back[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(back[(0, 1)], 1.0, max_relative = 1e-12);

        // Symmetric but indefinite: eigenvalues 3 and -1.
        let bad = CovarianceMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 1.0],
        ))
        .unwrap();
        assert!(
            matches!(spd_matrix_sqrt(&bad), Err(Error::NotPositiveDefinite { .. })),
            "indefinite matrix must be rejected by the square root"
        );
    }

    #[test]
    fn psd_csv_round_trip_is_exact() {
        let psd = ar_to_psd(&ar1(0.9), 128).unwrap();
        let mut buf = Vec::new();
        psd.to_csv(&mut buf).unwrap();
        let back = PsdGrid::from_csv(buf.as_slice()).unwrap();
        assert_eq!(psd, back, "CSV round trip must preserve every bit");
    }

    #[test]
    fn psd_csv_rejects_bad_header_and_bad_omegas() {
        let text = "freq,psd\n0.0,1.0\n0.5,1.0\n";
        assert!(PsdGrid::from_csv(text.as_bytes()).is_err());
        let text = "omega,psd\n0.0,1.0\n0.5,1.0\n";
        assert!(
            PsdGrid::from_csv(text.as_bytes()).is_err(),
            "omegas not on the canonical grid must be rejected"
        );
    }

    #[test]
    fn serde_round_trips_preserve_values() {
        let psd = ar_to_psd(&ar1(0.5), 64).unwrap();
        let json = serde_json::to_string(&psd).unwrap();
        let back: PsdGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(psd, back);

        let k = psd_to_covariance(&psd, 4).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        let back: CovarianceMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(k, back);

        let model = ArModel::new(vec![0.5, -0.1], 2.0).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ArModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    proptest! {
        #[test]
        fn stable_first_order_models_produce_valid_spectra(a in -0.95f64..0.95) {
            let psd = ar_to_psd(&ar1(a), 512).unwrap();
            prop_assert!(psd.is_strictly_positive());
            // The grid mean converges to the stationary variance
            // geometrically in the grid size (aliasing ~ a^G).
            let expected = 1.0 / (1.0 - a * a);
            prop_assert!((psd.variance() - expected).abs() <= 1e-9 * expected);
        }

        #[test]
        fn covariance_truncations_are_positive_semidefinite(
            a in -0.95f64..0.95,
            n in 1usize..12,
        ) {
            let psd = ar_to_psd(&ar1(a), 512).unwrap();
            let k = psd_to_covariance(&psd, n).unwrap();
            let min_eig = k.eigenvalues()[0];
            prop_assert!(
                min_eig >= -1e-10 * k.trace_mean(),
                "truncated covariance must stay PSD, min eig {}", min_eig
            );
        }

        #[test]
        fn matrix_sqrt_residual_meets_tolerance(
            seed in 0u64..1000,
            n in 1usize..10,
        ) {
            use rand::SeedableRng;
            use rand::Rng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let k = CovarianceMatrix::new(
                &b * b.transpose() + DMatrix::identity(n, n) * 1e-3,
            ).unwrap();
            let s = spd_matrix_sqrt(&k).unwrap();
            let residual = (&s * &s - k.as_matrix()).norm();
            prop_assert!(residual <= 1e-10 * k.as_matrix().norm());
        }
    }
}
