//! The JSON experiment configuration every subcommand reads.
//!
//! One document describes the source, the distortion targets, and the coder
//! and channel under test. The schema is versioned and strict: unknown keys
//! are rejected so typos fail loudly instead of silently using a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rdperp::quantizer::LatticeKind;
use rdperp::sim::{Channel, SourceSpec};
use rdperp::spectra::{ar_to_psd, psd_to_covariance, ArModel, CovarianceMatrix, PsdGrid};
use rdperp::{Error, Result};

/// Schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Default analysis grid for synthesized spectra.
const DEFAULT_DESIGN_GRID: usize = 4096;

/// Default grid for empirical (Welch) spectra.
const DEFAULT_WELCH_GRID: usize = 1024;

/// Grid points required per noise-shaper FIR tap.
const GRID_PER_TAP: usize = 64;

/// One experiment: source, distortion targets, coder, channel, budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Exactly one source description.
    pub source: SourceConfig,
    /// Distortion targets, a list or a log-spaced range.
    pub distortions: DistortionTargets,
    /// Coder under test (required by design/simulate/sweep).
    #[serde(default)]
    pub architecture: Option<Architecture>,
    /// Channel between encoder and decoder (required by simulate).
    #[serde(default)]
    pub channel: Option<ChannelConfig>,
    /// Channel noise variance the designs are built for.
    #[serde(default = "default_sigma_w2")]
    pub sigma_w2: f64,
    /// Noise-shaper filter length.
    #[serde(default = "default_fir_len")]
    pub fir_len: usize,
    /// Block length for the matrix designs.
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    /// Frequency-grid size (analysis and empirical spectra).
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Sample budget: blocks for matrix designs, steps for streams.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Stream branches run in parallel; defaults to the lattice dimension.
    #[serde(default)]
    pub n_parallel: Option<usize>,
    /// Base random seed.
    #[serde(default)]
    pub seed: u64,
    /// Stream burn-in override (defaults to ten filter lengths).
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Record Welch spectra during stream simulations.
    #[serde(default)]
    pub estimate_spectra: bool,
    /// Where result files go.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Reuse a previously written design instead of synthesizing one.
    #[serde(default)]
    pub design_file: Option<PathBuf>,
    /// Lattices the sweep compares.
    #[serde(default)]
    pub lattices: Option<Vec<LatticeKind>>,
    /// Directory the config file was loaded from; relative paths inside the
    /// config resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_sigma_w2() -> f64 {
    1.0
}

fn default_fir_len() -> usize {
    128
}

fn default_block_size() -> usize {
    8
}

fn default_n_samples() -> usize {
    1_000_000
}

impl ExperimentConfig {
    /// Loads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| {
                Error::invalid(format!("config {}: {e}", path.display()))
            })?;
        config.base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "schema-version {} unsupported; this build reads version {}",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if !self.sigma_w2.is_finite() || self.sigma_w2 <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma-w2 must be positive and finite, got {}",
                self.sigma_w2
            )));
        }
        if self.fir_len == 0 {
            return Err(Error::invalid("fir-len must be at least 1"));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block-size must be at least 1"));
        }
        if let Some(lattices) = &self.lattices {
            if lattices.is_empty() {
                return Err(Error::invalid("lattices must not be empty when given"));
            }
        }
        self.distortions.expand()?;
        Ok(())
    }

    /// Resolves a config-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Directory result files are written to.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("rdperp-out"))
    }

    /// Grid used to synthesize analysis spectra and designs: the configured
    /// grid (or 4096), raised to cover the FIR length and rounded up to a
    /// power of two so the empirical grid always divides it.
    pub fn design_grid(&self) -> usize {
        self.grid_size
            .unwrap_or(DEFAULT_DESIGN_GRID)
            .max(DEFAULT_DESIGN_GRID)
            .max(GRID_PER_TAP * self.fir_len)
            .next_power_of_two()
    }

    /// Grid for empirical (Welch) spectra: the configured grid or 1024,
    /// rounded up to a power of two.
    pub fn welch_grid(&self) -> usize {
        self.grid_size
            .unwrap_or(DEFAULT_WELCH_GRID)
            .max(64)
            .next_power_of_two()
    }

    /// The source as a spectrum plus a sample generator. File-backed
    /// spectra keep their own grid; synthesized spectra use `grid`.
    pub fn spectral_source(&self, grid: usize) -> Result<(PsdGrid, SourceSpec)> {
        match &self.source {
            SourceConfig::White { variance } => {
                let psd = PsdGrid::flat(*variance, grid)?;
                Ok((psd, SourceSpec::White { variance: *variance }))
            }
            SourceConfig::Ar {
                coeffs,
                innovation_variance,
            } => {
                let model = ArModel::new(coeffs.clone(), *innovation_variance)?;
                let psd = ar_to_psd(&model, grid)?;
                Ok((psd, SourceSpec::Ar { model }))
            }
            SourceConfig::PsdFile { path } => {
                let full = self.resolve(path);
                let file = fs::File::open(&full).map_err(|e| {
                    Error::invalid(format!("cannot read PSD {}: {e}", full.display()))
                })?;
                let psd = PsdGrid::from_csv(file)?;
                Ok((psd.clone(), SourceSpec::Psd { psd }))
            }
            SourceConfig::CovarianceFile { .. } => Err(Error::invalid(
                "this command needs a spectral source (white, ar, or psd-file)",
            )),
        }
    }

    /// The source as an `n x n` covariance for the matrix designs: read
    /// from file, or the Toeplitz covariance of the source spectrum.
    pub fn block_covariance(&self, n: usize, grid: usize) -> Result<CovarianceMatrix> {
        match &self.source {
            SourceConfig::CovarianceFile { path } => {
                let full = self.resolve(path);
                let text = fs::read_to_string(&full).map_err(|e| {
                    Error::invalid(format!(
                        "cannot read covariance {}: {e}",
                        full.display()
                    ))
                })?;
                let k_x = covariance_from_csv(&text)?;
                if k_x.dim() != n {
                    return Err(Error::DimensionMismatch {
                        context: "covariance file vs block-size",
                        expected: n,
                        actual: k_x.dim(),
                    });
                }
                Ok(k_x)
            }
            _ => {
                let (psd, _) = self.spectral_source(grid)?;
                psd_to_covariance(&psd, n)
            }
        }
    }
}

/// Source description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case",
    deny_unknown_fields
)]
pub enum SourceConfig {
    /// Memoryless Gaussian source.
    White {
        /// Source variance.
        variance: f64,
    },
    /// Autoregressive Gaussian source.
    Ar {
        /// Regression coefficients (lag 1 first).
        coeffs: Vec<f64>,
        /// Innovation variance.
        innovation_variance: f64,
    },
    /// Spectrum read from a two-column CSV (omega, psd).
    PsdFile {
        /// CSV path, relative to the config file.
        path: PathBuf,
    },
    /// Covariance matrix read from a headerless CSV of rows.
    CovarianceFile {
        /// CSV path, relative to the config file.
        path: PathBuf,
    },
}

/// Distortion targets: explicit or log-spaced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum DistortionTargets {
    /// Explicit values.
    List(Vec<f64>),
    /// `count` values spaced geometrically from `min` to `max` inclusive.
    LogRange {
        /// Smallest distortion.
        min: f64,
        /// Largest distortion.
        max: f64,
        /// Number of points (at least 2).
        count: usize,
    },
}

impl DistortionTargets {
    /// The targets in ascending order.
    pub fn expand(&self) -> Result<Vec<f64>> {
        let targets = match self {
            DistortionTargets::List(values) => {
                if values.is_empty() {
                    return Err(Error::invalid("distortions list must not be empty"));
                }
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                v
            }
            DistortionTargets::LogRange { min, max, count } => {
                if *count < 2 {
                    return Err(Error::invalid(format!(
                        "log-range count must be at least 2, got {count}"
                    )));
                }
                if !min.is_finite() || !max.is_finite() || *min <= 0.0 || *max <= *min {
                    return Err(Error::invalid(format!(
                        "log-range needs finite 0 < min < max, got min {min}, max {max}"
                    )));
                }
                let ratio = max / min;
                (0..*count)
                    .map(|i| min * ratio.powf(i as f64 / (*count as f64 - 1.0)))
                    .collect()
            }
        };
        for &d in &targets {
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::invalid(format!(
                    "distortion targets must be positive and finite, got {d}"
                )));
            }
        }
        Ok(targets)
    }
}

/// Coder under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// No coder: the source goes straight through the channel.
    TestChannel,
    /// Plain causal transform coder.
    Transform,
    /// Error-feedback transform coder.
    FeedbackTransform,
    /// Stationary noise-shaping loop.
    NoiseShaper,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Architecture::TestChannel => "test-channel",
            Architecture::Transform => "transform",
            Architecture::FeedbackTransform => "feedback-transform",
            Architecture::NoiseShaper => "noise-shaper",
        };
        f.write_str(name)
    }
}

/// Channel selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelConfig {
    /// Noiseless pass-through.
    Wire,
    /// Gaussian noise at `sigma-w2`.
    Awgn,
    /// Scalar dithered quantizer.
    Z1,
    /// Square-lattice pair quantizer.
    Z2,
    /// Four-dimensional checkerboard lattice.
    D4,
    /// Eight-dimensional Gosset lattice.
    E8,
}

impl ChannelConfig {
    /// The simulation channel this selects.
    pub fn to_channel(self) -> Channel {
        match self {
            ChannelConfig::Wire => Channel::Wire,
            ChannelConfig::Awgn => Channel::Awgn,
            ChannelConfig::Z1 => Channel::Lattice(LatticeKind::Z1),
            ChannelConfig::Z2 => Channel::Lattice(LatticeKind::Z2),
            ChannelConfig::D4 => Channel::Lattice(LatticeKind::D4),
            ChannelConfig::E8 => Channel::Lattice(LatticeKind::E8),
        }
    }
}

impl std::fmt::Display for ChannelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_channel())
    }
}

/// Parses a headerless CSV of matrix rows into a covariance matrix.
fn covariance_from_csv(text: &str) -> Result<CovarianceMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::CsvFormat {
                    line: idx + 1,
                    message: format!("not a number: {:?}", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::CsvFormat {
                    line: idx + 1,
                    message: format!(
                        "row has {} entries, expected {}",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::CsvFormat {
            line: 1,
            message: "no rows".to_string(),
        });
    }
    let n = rows.len();
    if rows[0].len() != n {
        return Err(Error::CsvFormat {
            line: 1,
            message: format!("matrix is {}x{}, expected square", n, rows[0].len()),
        });
    }
    let matrix =
        nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    CovarianceMatrix::new(matrix)
}
