//! Gaussian source models for simulation: white, autoregressive, or an
//! arbitrary spectrum synthesized through a minimum-phase FIR.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coder::min_phase_spectral_factor;
use crate::error::{Error, Result};
use crate::spectra::{ar_to_psd, psd_to_covariance, ArModel, CovarianceMatrix, PsdGrid};

/// Longest synthesis filter used when a source is specified directly by its
/// spectrum.
const MAX_SYNTHESIS_FIR_LEN: usize = 512;

/// A stationary zero-mean Gaussian source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SourceSpec {
    /// Independent samples of the given variance.
    White { variance: f64 },
    /// A stable autoregressive model driven by white Gaussian innovations.
    Ar { model: ArModel },
    /// A source specified by its power spectrum; realized by filtering
    /// white innovations through a minimum-phase FIR fitted to the
    /// spectrum, so the simulated spectrum matches up to the FIR
    /// truncation error.
    Psd { psd: PsdGrid },
}

impl SourceSpec {
    /// Process variance.
    pub fn variance(&self) -> f64 {
        match self {
            SourceSpec::White { variance } => *variance,
            SourceSpec::Ar { model } => {
                // Mean of the spectrum on a fine grid; the grid is far finer
                // than any admissible pole radius requires.
                ar_to_psd(model, 8192)
                    .map(|p| p.variance())
                    .unwrap_or(f64::NAN)
            }
            SourceSpec::Psd { psd } => psd.variance(),
        }
    }

    /// Validates the parameters that the enum structure cannot enforce.
    pub fn validate(&self) -> Result<()> {
        if let SourceSpec::White { variance } = self {
            if !(variance.is_finite() && *variance > 0.0) {
                return Err(Error::invalid(format!(
                    "white source variance must be positive and finite, got {variance}"
                )));
            }
        }
        Ok(())
    }

    /// The source spectrum on a grid of the given size.
    ///
    /// Spectrum-specified sources are only available at their own grid size;
    /// use [`PsdGrid::grid_size`] of the stored grid to query it.
    pub fn psd(&self, grid_size: usize) -> Result<PsdGrid> {
        self.validate()?;
        match self {
            SourceSpec::White { variance } => PsdGrid::flat(*variance, grid_size),
            SourceSpec::Ar { model } => ar_to_psd(model, grid_size),
            SourceSpec::Psd { psd } => {
                if psd.grid_size() != grid_size {
                    return Err(Error::invalid(format!(
                        "spectrum-specified source is only available on its own \
                         grid of {} points, requested {grid_size}",
                        psd.grid_size()
                    )));
                }
                Ok(psd.clone())
            }
        }
    }

    /// Covariance of `n` consecutive samples.
    pub fn covariance(&self, n: usize) -> Result<CovarianceMatrix> {
        self.validate()?;
        match self {
            SourceSpec::White { variance } => {
                let eye = nalgebra::DMatrix::identity(n, n) * *variance;
                CovarianceMatrix::new(eye)
            }
            SourceSpec::Ar { model } => {
                let grid = (4 * n).next_power_of_two().max(4096);
                psd_to_covariance(&ar_to_psd(model, grid)?, n)
            }
            SourceSpec::Psd { psd } => psd_to_covariance(psd, n),
        }
    }

    /// Builds one independent streaming generator for this source. Streams
    /// with memory start from zero state: discard a burn-in prefix before
    /// collecting statistics.
    pub fn generator(&self) -> Result<SourceGenerator> {
        self.validate()?;
        let state = match self {
            SourceSpec::White { variance } => GeneratorState::White {
                sigma: variance.sqrt(),
            },
            SourceSpec::Ar { model } => GeneratorState::Ar {
                coeffs: model.coeffs().to_vec(),
                sigma_e: model.innovation_variance().sqrt(),
                history: vec![0.0; model.order().max(1)],
                pos: 0,
            },
            SourceSpec::Psd { psd } => {
                let fir_len = (psd.grid_size() / 8).min(MAX_SYNTHESIS_FIR_LEN);
                let taps = min_phase_spectral_factor(psd, fir_len)?;
                GeneratorState::Fir {
                    history: vec![0.0; taps.len()],
                    taps,
                    pos: 0,
                }
            }
        };
        Ok(SourceGenerator { state })
    }

    /// Burn-in needed for the generator itself to forget its zero initial
    /// state (on top of whatever the surrounding system needs).
    pub fn recommended_burn_in(&self) -> usize {
        match self {
            SourceSpec::White { .. } => 0,
            SourceSpec::Ar { model } => 64 * model.order().max(1),
            SourceSpec::Psd { psd } => (psd.grid_size() / 8).min(MAX_SYNTHESIS_FIR_LEN),
        }
    }
}

#[derive(Debug, Clone)]
enum GeneratorState {
    White {
        sigma: f64,
    },
    Ar {
        coeffs: Vec<f64>,
        sigma_e: f64,
        history: Vec<f64>,
        pos: usize,
    },
    Fir {
        taps: Vec<f64>,
        history: Vec<f64>,
        pos: usize,
    },
}

/// A streaming sample generator for one source branch; consumes exactly one
/// standard normal draw from the RNG per sample.
#[derive(Debug, Clone)]
pub struct SourceGenerator {
    state: GeneratorState,
}

impl SourceGenerator {
    /// Produces the next sample.
    pub fn next_sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let g: f64 = StandardNormal.sample(rng);
        match &mut self.state {
            GeneratorState::White { sigma } => *sigma * g,
            GeneratorState::Ar {
                coeffs,
                sigma_e,
                history,
                pos,
            } => {
                let p = history.len();
                // history[(pos + m) % p] holds the sample at lag m + 1.
                let mut x = *sigma_e * g;
                for (m, &a) in coeffs.iter().enumerate() {
                    x += a * history[(*pos + m) % p];
                }
                *pos = (*pos + p - 1) % p;
                history[*pos] = x;
                x
            }
            GeneratorState::Fir { taps, history, pos } => {
                // history holds past innovations, newest at pos.
                *pos = (*pos + history.len() - 1) % history.len();
                history[*pos] = g;
                let len = history.len();
                taps.iter()
                    .enumerate()
                    .map(|(m, &h)| h * history[(*pos + m) % len])
                    .sum()
            }
        }
    }
}
