//! Welch power-spectral-density estimation (Hann window, half-overlapped
//! segments), normalized so the mean over frequency bins equals the process
//! variance — the same convention the analytic spectra use.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::spectra::PsdGrid;

/// Minimum number of samples per grid point for a usable estimate.
const SAMPLES_PER_BIN: usize = 100;

/// Accumulates half-overlapped Hann-windowed periodograms from one or more
/// independent streams of the same process.
pub(crate) struct WelchAccumulator {
    segment_len: usize,
    window: Vec<f64>,
    window_power: f64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    power: Vec<f64>,
    segments: usize,
    total_samples: usize,
}

impl WelchAccumulator {
    pub(crate) fn new(grid_size: usize) -> Result<Self> {
        if grid_size < 64 || grid_size % 2 != 0 {
            return Err(Error::invalid(format!(
                "spectral grid size must be even and at least 64, got {grid_size}"
            )));
        }
        let window: Vec<f64> = (0..grid_size)
            .map(|m| {
                let phase = 2.0 * std::f64::consts::PI * m as f64 / grid_size as f64;
                0.5 * (1.0 - phase.cos())
            })
            .collect();
        let window_power = window.iter().map(|&w| w * w).sum();
        Ok(WelchAccumulator {
            segment_len: grid_size,
            window,
            window_power,
            fft: FftPlanner::new().plan_fft_forward(grid_size),
            power: vec![0.0; grid_size],
            segments: 0,
            total_samples: 0,
        })
    }

    /// Adds one contiguous stream; segments never straddle stream
    /// boundaries, so independent branches can be pooled safely.
    pub(crate) fn add_stream(&mut self, samples: &[f64]) {
        let g = self.segment_len;
        self.total_samples += samples.len();
        let hop = g / 2;
        let mut start = 0;
        let mut buf = vec![Complex::new(0.0, 0.0); g];
        while start + g <= samples.len() {
            for (m, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(samples[start + m] * self.window[m], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, value) in buf.iter().enumerate() {
                self.power[k] += value.norm_sqr();
            }
            self.segments += 1;
            start += hop;
        }
    }

    /// Finishes the estimate, reordering from DFT bin order to the
    /// symmetric canonical grid.
    pub(crate) fn finish(self) -> Result<PsdGrid> {
        let g = self.segment_len;
        if self.total_samples < SAMPLES_PER_BIN * g {
            return Err(Error::invalid(format!(
                "spectral estimation needs at least {} samples for a grid of \
                 {g} points, got {}",
                SAMPLES_PER_BIN * g,
                self.total_samples
            )));
        }
        let norm = 1.0 / (self.segments as f64 * self.window_power);
        let values: Vec<f64> = (0..g)
            .map(|j| self.power[(j + g / 2) % g] * norm)
            .collect();
        PsdGrid::new(values)
    }
}

/// Welch estimate of the power spectrum of one stationary stream on the
/// canonical grid of `grid_size` points. Requires at least
/// `100 * grid_size` samples.
pub fn estimate_psd(samples: &[f64], grid_size: usize) -> Result<PsdGrid> {
    let mut acc = WelchAccumulator::new(grid_size)?;
    acc.add_stream(samples);
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::source::SourceSpec;
    use crate::spectra::{ar_to_psd, ArModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn relative_l2(got: &[f64], want: &[f64]) -> f64 {
        let num: f64 = got
            .iter()
            .zip(want)
            .map(|(&g, &w)| (g - w) * (g - w))
            .sum();
        let den: f64 = want.iter().map(|&w| w * w).sum();
        (num / den).sqrt()
    }

    #[test]
    fn white_noise_estimate_is_flat_at_the_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let spec = SourceSpec::White { variance: 2.5 };
        let mut generator = spec.generator().unwrap();
        let samples: Vec<f64> = (0..60_000).map(|_| generator.next_sample(&mut rng)).collect();
        let psd = estimate_psd(&samples, 128).unwrap();
        let flat = vec![2.5; 128];
        let rel = relative_l2(psd.values(), &flat);
        assert!(rel < 0.05, "white spectrum off by {rel}");
        assert!((psd.variance() - 2.5).abs() / 2.5 < 0.02);
    }

    #[test]
    fn autoregressive_estimate_matches_the_model_spectrum() {
        let mut rng = ChaCha12Rng::seed_from_u64(72);
        let model = ArModel::new(vec![0.9], 1.0).unwrap();
        let spec = SourceSpec::Ar {
            model: model.clone(),
        };
        let mut generator = spec.generator().unwrap();
        // Burn in the generator, then collect.
        for _ in 0..1000 {
            generator.next_sample(&mut rng);
        }
        let samples: Vec<f64> =
            (0..400_000).map(|_| generator.next_sample(&mut rng)).collect();
        let psd = estimate_psd(&samples, 256).unwrap();
        let want = ar_to_psd(&model, 256).unwrap();
        let rel = relative_l2(psd.values(), want.values());
        assert!(rel < 0.05, "model spectrum off by {rel}");
    }

    #[test]
    fn spectrum_specified_source_synthesizes_its_own_spectrum() {
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let model = ArModel::new(vec![0.5], 1.0).unwrap();
        let target = ar_to_psd(&model, 256).unwrap();
        let spec = SourceSpec::Psd {
            psd: target.clone(),
        };
        let mut generator = spec.generator().unwrap();
        for _ in 0..spec.recommended_burn_in() {
            generator.next_sample(&mut rng);
        }
        let samples: Vec<f64> =
            (0..300_000).map(|_| generator.next_sample(&mut rng)).collect();
        let psd = estimate_psd(&samples, 256).unwrap();
        let rel = relative_l2(psd.values(), target.values());
        assert!(rel < 0.05, "synthesized spectrum off by {rel}");
    }

    #[test]
    fn estimator_rejects_short_streams_and_bad_grids() {
        let samples = vec![0.0; 1000];
        assert!(estimate_psd(&samples, 128).is_err(), "too few samples");
        assert!(estimate_psd(&samples, 63).is_err(), "odd grid");
        assert!(estimate_psd(&samples, 2).is_err(), "tiny grid");
    }
}
