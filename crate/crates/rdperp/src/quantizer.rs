//! Subtractively dithered lattice quantizers with optional linear shaping.
//!
//! The quantizers here turn the AWGN test-channel designs of [`crate::coder`]
//! into implementable coders: a subtractively dithered lattice quantizer is,
//! in distribution, exactly an additive-noise channel whose noise is uniform
//! over the lattice Voronoi cell and independent of the input. Four base
//! lattices are supported — the integers, the square grid, the
//! checkerboard lattice in four dimensions, and the Gosset lattice in
//! eight — each with an exact closest-point algorithm and exactly known
//! per-dimension second moment.
//!
//! A [`ShapedDitheredQuantizer`] composes a scaled base lattice with an
//! invertible shaping matrix `M`: quantization happens in the `M^{-1}`
//! coordinates, so the error in original coordinates is uniform over the
//! `M`-image of the Voronoi cell with covariance exactly
//! `second_moment * M M^T`. Choosing `M` by Cholesky factorization of a
//! target covariance ([`ShapedDitheredQuantizer::from_error_covariance`])
//! realizes an arbitrary spectrum-shaped quantization noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::spectra::CovarianceMatrix;

/// The supported base lattices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    /// The integers (scalar quantizer).
    Z1,
    /// The square grid in two dimensions.
    Z2,
    /// The four-dimensional checkerboard lattice (integer vectors with even
    /// coordinate sum).
    D4,
    /// The eight-dimensional Gosset lattice.
    E8,
}

impl LatticeKind {
    /// Lattice dimension.
    pub fn dim(self) -> usize {
        match self {
            LatticeKind::Z1 => 1,
            LatticeKind::Z2 => 2,
            LatticeKind::D4 => 4,
            LatticeKind::E8 => 8,
        }
    }

    /// Exact per-dimension second moment of the Voronoi cell at the natural
    /// integer scale of the generator.
    pub fn base_second_moment(self) -> f64 {
        match self {
            LatticeKind::Z1 | LatticeKind::Z2 => 1.0 / 12.0,
            LatticeKind::D4 => 13.0 / 120.0,
            LatticeKind::E8 => 929.0 / 12960.0,
        }
    }

    /// Fundamental cell volume at the natural scale.
    pub fn base_cell_volume(self) -> f64 {
        match self {
            LatticeKind::Z1 | LatticeKind::Z2 | LatticeKind::E8 => 1.0,
            LatticeKind::D4 => 2.0,
        }
    }

    /// Dimensionless normalized second moment
    /// `base_second_moment / volume^{2/n}` — the scale-free figure of merit
    /// for mean-squared-error shaping (lower is better; 1/12 for the
    /// integers).
    pub fn normalized_second_moment(self) -> f64 {
        self.base_second_moment()
            / self
                .base_cell_volume()
                .powf(2.0 / self.dim() as f64)
    }

    /// Generator matrix with basis vectors as rows, at the natural scale.
    pub fn generator(self) -> DMatrix<f64> {
        match self {
            LatticeKind::Z1 => DMatrix::identity(1, 1),
            LatticeKind::Z2 => DMatrix::identity(2, 2),
            LatticeKind::D4 => DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, -1.0, 0.0, 0.0, //
                    0.0, 1.0, -1.0, 0.0, //
                    0.0, 0.0, 1.0, -1.0, //
                    0.0, 0.0, 1.0, 1.0,
                ],
            ),
            LatticeKind::E8 => {
                let mut g = DMatrix::zeros(8, 8);
                g[(0, 0)] = 2.0;
                for i in 1..7 {
                    g[(i, i - 1)] = -1.0;
                    g[(i, i)] = 1.0;
                }
                for j in 0..8 {
                    g[(7, j)] = 0.5;
                }
                g
            }
        }
    }

    /// Exact closest lattice point to `x` at the natural scale.
    ///
    /// Ties (inputs equidistant from several lattice points) are broken
    /// deterministically; they form a measure-zero set and never occur for
    /// dithered inputs.
    pub fn nearest_point(self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            LatticeKind::Z1 | LatticeKind::Z2 => x.map(f64::round),
            LatticeKind::D4 => nearest_point_dn(x),
            LatticeKind::E8 => {
                // The Gosset lattice is the union of the eight-dimensional
                // checkerboard lattice and its translate by the all-halves
                // vector; take the closer of the two candidates.
                let plain = nearest_point_dn(x);
                let half = DVector::from_element(8, 0.5);
                let shifted = nearest_point_dn(&(x - &half)) + &half;
                if (x - &plain).norm_squared() <= (x - &shifted).norm_squared() {
                    plain
                } else {
                    shifted
                }
            }
        }
    }
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LatticeKind::Z1 => "z1",
            LatticeKind::Z2 => "z2",
            LatticeKind::D4 => "d4",
            LatticeKind::E8 => "e8",
        };
        f.write_str(name)
    }
}

/// Closest point in the checkerboard lattice (integer vectors with even
/// coordinate sum): round every coordinate, then if the parity is odd,
/// re-round the worst coordinate the other way.
fn nearest_point_dn(x: &DVector<f64>) -> DVector<f64> {
    let mut rounded = x.map(f64::round);
    let parity: i64 = rounded.iter().map(|&v| v as i64).sum();
    if parity.rem_euclid(2) == 1 {
        let worst = (0..x.len())
            .max_by(|&i, &j| {
                let di = (x[i] - rounded[i]).abs();
                let dj = (x[j] - rounded[j]).abs();
                di.partial_cmp(&dj).expect("finite quantizer input")
            })
            .expect("nonempty vector");
        rounded[worst] += if x[worst] >= rounded[worst] { 1.0 } else { -1.0 };
    }
    rounded
}

/// A base lattice together with a positive scale factor. Reconstruction
/// points are `scale` times the natural-scale lattice points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpecData", into = "LatticeSpecData")]
pub struct LatticeSpec {
    kind: LatticeKind,
    scale: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LatticeSpecData {
    kind: LatticeKind,
    scale: f64,
}

impl TryFrom<LatticeSpecData> for LatticeSpec {
    type Error = Error;
    fn try_from(data: LatticeSpecData) -> Result<Self> {
        LatticeSpec::new(data.kind, data.scale)
    }
}

impl From<LatticeSpec> for LatticeSpecData {
    fn from(spec: LatticeSpec) -> Self {
        LatticeSpecData {
            kind: spec.kind,
            scale: spec.scale,
        }
    }
}

impl LatticeSpec {
    /// A lattice at an explicit scale.
    pub fn new(kind: LatticeKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!(
                "lattice scale must be positive and finite, got {scale}"
            )));
        }
        Ok(LatticeSpec { kind, scale })
    }

    /// The lattice at its natural scale.
    pub fn unit(kind: LatticeKind) -> Self {
        LatticeSpec { kind, scale: 1.0 }
    }

    /// The lattice scaled so the per-dimension second moment of its Voronoi
    /// cell equals `target` — i.e. so its quantization error has variance
    /// `target` per dimension.
    pub fn scaled_to_second_moment(kind: LatticeKind, target: f64) -> Result<Self> {
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::invalid(format!(
                "target second moment must be positive and finite, got {target}"
            )));
        }
        LatticeSpec::new(kind, (target / kind.base_second_moment()).sqrt())
    }

    /// Base lattice.
    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    /// Scale factor applied to natural-scale lattice points.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Lattice dimension.
    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Per-dimension second moment of the scaled Voronoi cell.
    pub fn second_moment(&self) -> f64 {
        self.scale * self.scale * self.kind.base_second_moment()
    }
}

/// One quantization result: the integer symbol, the reconstruction the
/// decoder produces, and the reconstruction error.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSample {
    /// Integer symbol identifying the chosen lattice point: twice the
    /// natural-scale coordinates (the doubling makes the half-integer points
    /// of the Gosset lattice exact integers).
    pub indices: Vec<i64>,
    /// Decoder output `scale * M * p - dither`.
    pub reconstruction: DVector<f64>,
    /// `reconstruction - input`; uniform over the shaped cell and
    /// independent of the input, by the subtractive-dither construction.
    pub error: DVector<f64>,
}

/// A subtractively dithered lattice quantizer operating in linearly shaped
/// coordinates.
///
/// With shaping `M` (invertible) and scaled lattice `L`: the dither is drawn
/// uniform over the `M`-image of the Voronoi cell of `L`; encoding maps
/// `input + dither` through `(scale * M)^{-1}`, takes the closest
/// natural-scale lattice point, and the decoder maps back and subtracts the
/// dither. The error is distributed exactly like the dither (the cell is
/// centrally symmetric) and is independent of the input.
#[derive(Debug, Clone)]
pub struct ShapedDitheredQuantizer {
    lattice: LatticeSpec,
    shaping: DMatrix<f64>,
    total: DMatrix<f64>,
    total_inv: DMatrix<f64>,
    generator_t: DMatrix<f64>,
}

impl ShapedDitheredQuantizer {
    /// Quantizer with an explicit shaping matrix (must be square, finite,
    /// and invertible).
    pub fn new(lattice: LatticeSpec, shaping: DMatrix<f64>) -> Result<Self> {
        let n = lattice.dim();
        if shaping.nrows() != n || shaping.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "quantizer shaping matrix",
                expected: n,
                actual: shaping.nrows().max(shaping.ncols()),
            });
        }
        if shaping.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("shaping matrix entries must be finite"));
        }
        let shaping_inv = shaping.clone().try_inverse().ok_or_else(|| {
            Error::invalid("shaping matrix must be invertible")
        })?;
        if shaping_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "shaping matrix is numerically singular",
            ));
        }
        let total = &shaping * lattice.scale();
        let total_inv = shaping_inv / lattice.scale();
        let generator_t = lattice.kind().generator().transpose();
        Ok(ShapedDitheredQuantizer {
            lattice,
            shaping,
            total,
            total_inv,
            generator_t,
        })
    }

    /// Quantizer with identity shaping: plain scaled-lattice quantization.
    pub fn unshaped(lattice: LatticeSpec) -> Self {
        let n = lattice.dim();
        ShapedDitheredQuantizer::new(lattice, DMatrix::identity(n, n))
            .expect("identity shaping is always valid")
    }

    /// Quantizer whose error covariance is exactly `k_target`: shaping is
    /// the lower Cholesky factor of `k_target / second_moment`. Fails if
    /// `k_target` is not positive definite.
    pub fn from_error_covariance(
        lattice: LatticeSpec,
        k_target: &CovarianceMatrix,
    ) -> Result<Self> {
        let n = lattice.dim();
        if k_target.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "quantizer error covariance",
                expected: n,
                actual: k_target.dim(),
            });
        }
        let m = cholesky_lower(&(k_target.as_matrix() / lattice.second_moment()))?;
        ShapedDitheredQuantizer::new(lattice, m)
    }

    /// The underlying scaled lattice.
    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    /// The shaping matrix `M`.
    pub fn shaping(&self) -> &DMatrix<f64> {
        &self.shaping
    }

    /// Quantizer dimension.
    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Exact error covariance: `second_moment * M M^T`.
    pub fn error_covariance(&self) -> DMatrix<f64> {
        self.lattice.second_moment() * &self.shaping * self.shaping.transpose()
    }

    /// Draws a dither uniform over the shaped Voronoi cell: a uniform draw
    /// from the fundamental parallelepiped is folded into the cell by
    /// subtracting its closest lattice point, then mapped through the
    /// shaping.
    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let coeffs = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let in_cell_base = {
            let p = &self.generator_t * coeffs;
            let nearest = self.lattice.kind().nearest_point(&p);
            p - nearest
        };
        &self.total * in_cell_base
    }

    /// Subtractively dithered quantization of one vector: the encoder
    /// quantizes `input + dither`, the decoder subtracts the dither from the
    /// reproduced point.
    pub fn quantize_subtractive(
        &self,
        input: &DVector<f64>,
        dither: &DVector<f64>,
    ) -> QuantizedSample {
        debug_assert_eq!(input.len(), self.dim());
        debug_assert_eq!(dither.len(), self.dim());
        let target = &self.total_inv * (input + dither);
        let point = self.lattice.kind().nearest_point(&target);
        let indices = point
            .iter()
            .map(|&c| (2.0 * c).round() as i64)
            .collect::<Vec<_>>();
        let reconstruction = &self.total * point - dither;
        let error = &reconstruction - input;
        QuantizedSample {
            indices,
            reconstruction,
            error,
        }
    }
}

/// Writes interleaved integer symbols as CSV: header `i0,...,i{dim-1}`, one
/// row per quantized vector. `indices` must hold a whole number of
/// `dim`-tuples.
pub fn write_indices_csv<W: std::io::Write>(
    writer: &mut W,
    dim: usize,
    indices: &[i64],
) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("symbol dimension must be at least 1"));
    }
    if indices.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            context: "index CSV export",
            expected: dim * (indices.len() / dim + 1),
            actual: indices.len(),
        });
    }
    let header: Vec<String> = (0..dim).map(|k| format!("i{k}")).collect();
    writeln!(writer, "{}", header.join(","))?;
    for row in indices.chunks_exact(dim) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(writer, "{}", cells.join(","))?;
    }
    Ok(())
}
