//! Monte-Carlo validation of the coder designs.
//!
//! Two engines drive every experiment:
//!
//! * a **block engine** for the matrix designs ([`run_transform_coder`]):
//!   independent Gaussian blocks pass through the (plain or error-feedback)
//!   transform, a per-channel test channel, and the synthesis transform;
//! * a **stream engine** for the stationary noise shaper
//!   ([`run_feedback_quantizer`], [`run_parallel_bank`]): scalar FIR loops
//!   with error feedback, optionally several branches in parallel sharing a
//!   joint vector quantizer across branches.
//!
//! Channels are ideal wires (perfect-reconstruction checks), AWGN at the
//! design variance, or subtractively dithered lattice quantizers scaled to
//! the design variance. Quantized runs record the symbol/dither streams so
//! the operational rate can be estimated by [`estimate_rate`] and compared
//! against the design rate; the gap is bounded by the space-filling loss of
//! the scalar cell, [`rate_loss_bound_bits`], and every report carries that
//! comparison.
//!
//! All randomness flows from one seeded generator per run in a fixed draw
//! order, so identical configurations reproduce identical reports.

pub mod rate;
pub mod source;
mod welch;

pub use rate::{estimate_rate, QuantizedStream, RateEstimate, RateScheme};
pub use source::{SourceGenerator, SourceSpec};
pub use welch::estimate_psd;

pub use crate::numeric::derive_seed;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coder::{FeedbackTransformDesign, NoiseShaperDesign, TransformDesign};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, lower_triangular_inverse};
use crate::quantizer::{LatticeKind, LatticeSpec, ShapedDitheredQuantizer};
use crate::spectra::{spd_matrix_sqrt, CovarianceMatrix, PsdGrid};
use welch::WelchAccumulator;

/// Absolute bound on the dithered-quantizer rate penalty in bits per
/// dimension: half the binary log of the scalar cell's normalized second
/// moment ratio to a Gaussian, `log2(2 pi e / 12) / 2` (about 0.254).
pub fn rate_loss_bound_bits() -> f64 {
    0.5 * (std::f64::consts::PI * std::f64::consts::E / 6.0).log2()
}

/// Longest lag tracked for autocorrelation and cross-correlation
/// diagnostics.
const STAT_LAGS: usize = 64;

/// Cross-correlation between input and error is scanned over `+-` this lag.
const CROSS_LAGS: usize = 8;

/// Relative deviation between empirical and design distortion above which a
/// warning is recorded.
const DISTORTION_WARN_REL: f64 = 0.03;

/// A branch diverging past this multiple of the design scale aborts the run.
const DIVERGENCE_FACTOR: f64 = 1e9;

/// The test channel placed between encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    /// Perfect wire: no noise, checks reconstruction plumbing.
    Wire,
    /// Additive white Gaussian noise at the design variance.
    Awgn,
    /// Subtractively dithered lattice quantizer scaled so its cell second
    /// moment equals the design variance.
    Lattice(LatticeKind),
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Wire => f.write_str("wire"),
            Channel::Awgn => f.write_str("awgn"),
            Channel::Lattice(kind) => write!(f, "{kind}"),
        }
    }
}

/// Simulation run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Blocks for block simulations, time steps for stream simulations.
    /// At least 10,000.
    pub n_samples: usize,
    /// Stream branches run in parallel (must equal the lattice dimension
    /// when a vector lattice is the channel). Block simulations require 1.
    pub n_parallel: usize,
    /// Seed for the run's random generator.
    pub seed: u64,
    /// Stream samples discarded before statistics; defaults to ten filter
    /// lengths (plus the source's own settling time) and may not be set
    /// lower than that.
    pub burn_in: Option<usize>,
    /// Grid size for empirical spectra.
    pub grid_size: usize,
    /// Record Welch spectra of source, error, and channel output (stream
    /// simulations only; needs `100 * grid_size` retained samples).
    pub estimate_spectra: bool,
}

impl SimConfig {
    /// A configuration with the common defaults: one branch, default
    /// burn-in, 1024-point spectra, no spectral estimation.
    pub fn new(n_samples: usize, seed: u64) -> Self {
        SimConfig {
            n_samples,
            n_parallel: 1,
            seed,
            burn_in: None,
            grid_size: 1024,
            estimate_spectra: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 10_000 {
            return Err(Error::invalid(format!(
                "simulation needs at least 10000 samples, got {}",
                self.n_samples
            )));
        }
        if self.n_parallel == 0 {
            return Err(Error::invalid("n_parallel must be at least 1"));
        }
        Ok(())
    }
}

/// Empirical spectra from a stream run, on the canonical grid of the
/// configured size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpectra {
    /// Welch estimate of the source spectrum.
    pub source_psd: PsdGrid,
    /// Welch estimate of the reconstruction-error spectrum.
    pub error_psd: PsdGrid,
    /// Welch estimate of the channel-output spectrum.
    pub channel_output_psd: PsdGrid,
}

/// Everything a simulation measured, serializable as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Which coder ran: `causal-transform`, `feedback-transform`,
    /// `noise-shaper`, or `noise-shaper-bank`.
    pub architecture: String,
    /// Channel name (`wire`, `awgn`, or a lattice name).
    pub channel: String,
    /// Seed the run used.
    pub seed: u64,
    /// Configured sample count (blocks or steps).
    pub n_samples: usize,
    /// Scalar samples (or blocks) that entered the statistics.
    pub n_used: usize,
    /// Rate the design promises, bits per dimension.
    pub design_rate_bits: f64,
    /// Distortion the design promises, per dimension.
    pub design_distortion: f64,
    /// Measured mean squared reconstruction error per dimension.
    pub empirical_distortion: f64,
    /// Measured rate: conditional-entropy estimate for quantizer channels,
    /// Gaussian mutual-information estimate for AWGN; absent on wires.
    pub empirical_rate_bits: Option<f64>,
    /// Standard error of the measured rate.
    pub rate_std_error: Option<f64>,
    /// Measured rate minus design rate.
    pub rate_loss_bits: Option<f64>,
    /// The universal dithered-quantization penalty bound the loss is judged
    /// against.
    pub rate_loss_bound_bits: f64,
    /// Whether the measured loss is within the bound plus two standard
    /// errors; absent on wires.
    pub bound_satisfied: Option<bool>,
    /// Scalar diagnostics, deterministically ordered.
    pub diagnostics: BTreeMap<String, f64>,
    /// Non-fatal anomalies observed during the run.
    pub warnings: Vec<String>,
    /// Empirical spectra when requested.
    pub spectra: Option<SimSpectra>,
}

/// A finished run: the report plus the recorded symbol stream (present for
/// lattice channels) for export or further analysis.
#[derive(Debug, Clone)]
pub struct SimRun {
    /// Measurement report.
    pub report: SimReport,
    /// Symbols and dithers recorded after burn-in.
    pub quantized: Option<QuantizedStream>,
}

/// Either matrix design, borrowed.
#[derive(Debug, Clone, Copy)]
pub enum BlockDesign<'a> {
    /// Plain causal transform.
    Plain(&'a TransformDesign),
    /// Error-feedback transform.
    Feedback(&'a FeedbackTransformDesign),
}

impl<'a> From<&'a TransformDesign> for BlockDesign<'a> {
    fn from(d: &'a TransformDesign) -> Self {
        BlockDesign::Plain(d)
    }
}

impl<'a> From<&'a FeedbackTransformDesign> for BlockDesign<'a> {
    fn from(d: &'a FeedbackTransformDesign) -> Self {
        BlockDesign::Feedback(d)
    }
}

impl BlockDesign<'_> {
    fn dim(&self) -> usize {
        match self {
            BlockDesign::Plain(d) => d.dim(),
            BlockDesign::Feedback(d) => d.dim(),
        }
    }

    fn sigma_w2(&self) -> f64 {
        match self {
            BlockDesign::Plain(d) => d.sigma_w2(),
            BlockDesign::Feedback(d) => d.sigma_w2(),
        }
    }

    fn rate_bits(&self) -> f64 {
        match self {
            BlockDesign::Plain(d) => d.rate_bits(),
            BlockDesign::Feedback(d) => d.rate_bits(),
        }
    }

    fn distortion(&self) -> f64 {
        match self {
            BlockDesign::Plain(d) => d.distortion(),
            BlockDesign::Feedback(d) => d.distortion(),
        }
    }

    fn architecture(&self) -> &'static str {
        match self {
            BlockDesign::Plain(_) => "causal-transform",
            BlockDesign::Feedback(_) => "feedback-transform",
        }
    }
}

enum ChannelRuntime {
    Wire,
    Awgn { sigma: f64 },
    Lattice { quantizer: ShapedDitheredQuantizer },
}

impl ChannelRuntime {
    fn build(channel: Channel, sigma_w2: f64, dim: usize) -> Result<Self> {
        match channel {
            Channel::Wire => Ok(ChannelRuntime::Wire),
            Channel::Awgn => Ok(ChannelRuntime::Awgn {
                sigma: sigma_w2.sqrt(),
            }),
            Channel::Lattice(kind) => {
                if kind.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "lattice channel dimension",
                        expected: dim,
                        actual: kind.dim(),
                    });
                }
                let lattice = LatticeSpec::scaled_to_second_moment(kind, sigma_w2)?;
                Ok(ChannelRuntime::Lattice {
                    quantizer: ShapedDitheredQuantizer::unshaped(lattice),
                })
            }
        }
    }
}

/// A fixed-length ring buffer; the newest element sits at the rotation
/// point and `at_lag(0)` reads it back.
struct Ring {
    buf: Vec<f64>,
    pos: usize,
}

impl Ring {
    fn new(len: usize) -> Self {
        Ring {
            buf: vec![0.0; len.max(1)],
            pos: 0,
        }
    }

    fn push(&mut self, value: f64) {
        let len = self.buf.len();
        self.pos = (self.pos + len - 1) % len;
        self.buf[self.pos] = value;
    }

    fn at_lag(&self, lag: usize) -> f64 {
        self.buf[(self.pos + lag) % self.buf.len()]
    }

    /// `sum_m taps[m] * value_at_lag(m)` — an FIR output when the newest
    /// input has just been pushed.
    fn dot(&self, taps: &[f64]) -> f64 {
        let len = self.buf.len();
        taps.iter()
            .enumerate()
            .map(|(m, &t)| t * self.buf[(self.pos + m) % len])
            .sum()
    }

    /// `sum_{m>=1} taps[m] * value_at_lag(m - 1)` — a strictly causal FIR
    /// output evaluated *before* the current sample is pushed (the newest
    /// stored element is lag 1 of the loop).
    fn strictly_causal_dot(&self, taps: &[f64]) -> f64 {
        let len = self.buf.len();
        taps.iter()
            .skip(1)
            .enumerate()
            .map(|(back, &t)| t * self.buf[(self.pos + back) % len])
            .sum()
    }
}

fn excess_kurtosis(sum_sq: f64, sum_quad: f64, n: f64) -> Option<f64> {
    let m2 = sum_sq / n;
    if m2 <= 0.0 {
        return None;
    }
    Some(sum_quad / n / (m2 * m2) - 3.0)
}

fn log2_det_spd(matrix: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(matrix)?;
    Ok(2.0 * (0..l.nrows()).map(|k| l[(k, k)].log2()).sum::<f64>())
}

fn finish_rate_fields(
    report: &mut SimReport,
    rate: Option<(f64, f64)>, // (bits per dim, std error)
) {
    if let Some((bits, se)) = rate {
        let loss = bits - report.design_rate_bits;
        report.empirical_rate_bits = Some(bits);
        report.rate_std_error = Some(se);
        report.rate_loss_bits = Some(loss);
        report.bound_satisfied = Some(loss <= report.rate_loss_bound_bits + 2.0 * se);
    }
}

// ---------------------------------------------------------------------------
// Block engine
// ---------------------------------------------------------------------------

/// Simulates a matrix design over independent Gaussian blocks drawn from
/// `k_x`, through the given channel. `n_samples` counts blocks. Lattice
/// channels must be scalar (each transform channel is quantized separately,
/// in causal order for the feedback design).
pub fn run_transform_coder(
    design: BlockDesign<'_>,
    k_x: &CovarianceMatrix,
    channel: Channel,
    config: &SimConfig,
) -> Result<SimRun> {
    config.validate()?;
    if config.n_parallel != 1 {
        return Err(Error::invalid(
            "block simulations have no parallel branches; set n_parallel to 1",
        ));
    }
    if config.estimate_spectra {
        return Err(Error::invalid(
            "spectral estimation applies to stream simulations only",
        ));
    }
    let n = design.dim();
    if k_x.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "block simulation source covariance",
            expected: n,
            actual: k_x.dim(),
        });
    }
    if let Channel::Lattice(kind) = channel {
        if kind.dim() != 1 {
            return Err(Error::invalid(
                "block simulations quantize each transform channel separately; \
                 use a scalar lattice",
            ));
        }
    }
    let sigma_w2 = design.sigma_w2();
    let chan = ChannelRuntime::build(
        channel,
        sigma_w2,
        match channel {
            Channel::Lattice(_) => 1,
            _ => n,
        },
    )?;

    let sqrt_kx = spd_matrix_sqrt(k_x)?;
    let (forward, feedback) = match design {
        BlockDesign::Plain(d) => (d.transform().clone(), DMatrix::zeros(n, n)),
        BlockDesign::Feedback(d) => (d.transform().clone(), d.feedback().clone()),
    };
    let inverse = lower_triangular_inverse(&forward)?;

    let blocks = config.n_samples;
    let batches = 16usize;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    let mut k_uhat = DMatrix::<f64>::zeros(n, n);
    let mut k_uhat_batch = vec![DMatrix::<f64>::zeros(n, n); batches];
    let mut batch_blocks = vec![0u64; batches];
    let mut k_xe = DMatrix::<f64>::zeros(n, n);
    let mut x_sq = DVector::<f64>::zeros(n);
    let mut e_sq = DVector::<f64>::zeros(n);
    let mut dist_sum = 0.0;
    let mut err_sq = 0.0;
    let mut err_quad = 0.0;
    let mut pr_max: f64 = 0.0;
    let mut indices: Vec<i64> = Vec::new();
    let mut dithers: Vec<f64> = Vec::new();
    if matches!(chan, ChannelRuntime::Lattice { .. }) {
        indices.reserve(blocks * n);
        dithers.reserve(blocks * n);
    }

    let mut v = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let mut scalar_in = DVector::<f64>::zeros(1);
    for block in 0..blocks {
        let g = DVector::from_fn(n, |_, _| {
            let s: f64 = StandardNormal.sample(&mut rng);
            s
        });
        let x = &sqrt_kx * g;
        let u = &forward * &x;
        for k in 0..n {
            let mut fed = 0.0;
            for j in 0..k {
                fed += feedback[(k, j)] * w[j];
            }
            v[k] = u[k] - fed;
            w[k] = match &chan {
                ChannelRuntime::Wire => 0.0,
                ChannelRuntime::Awgn { sigma } => {
                    let s: f64 = StandardNormal.sample(&mut rng);
                    sigma * s
                }
                ChannelRuntime::Lattice { quantizer } => {
                    let dither = quantizer.sample_dither(&mut rng);
                    scalar_in[0] = v[k];
                    let sample = quantizer.quantize_subtractive(&scalar_in, &dither);
                    indices.push(sample.indices[0]);
                    dithers.push(dither[0]);
                    sample.error[0]
                }
            };
        }
        let uhat = &v + &w;
        let y = &inverse * &uhat;
        let e = &y - &x;

        let b = block * batches / blocks;
        batch_blocks[b] += 1;
        for i in 0..n {
            for j in 0..n {
                let prod = uhat[i] * uhat[j];
                k_uhat[(i, j)] += prod;
                k_uhat_batch[b][(i, j)] += prod;
                k_xe[(i, j)] += x[i] * e[j];
            }
            x_sq[i] += x[i] * x[i];
            e_sq[i] += e[i] * e[i];
            err_sq += e[i] * e[i];
            err_quad += e[i].powi(4);
            pr_max = pr_max.max(e[i].abs());
        }
        dist_sum += e.norm_squared();
    }

    let blocks_f = blocks as f64;
    let empirical_distortion = dist_sum / (blocks_f * n as f64);
    let mut diagnostics = BTreeMap::new();
    let mut warnings = Vec::new();

    let design_distortion = design.distortion();
    let dist_rel = (empirical_distortion - design_distortion).abs()
        / design_distortion;
    match channel {
        Channel::Wire => {
            diagnostics.insert("pr_max_abs_error".to_string(), pr_max);
        }
        _ => {
            diagnostics.insert("distortion_rel_deviation".to_string(), dist_rel);
            if dist_rel > DISTORTION_WARN_REL {
                warnings.push(format!(
                    "empirical distortion {empirical_distortion:.6} deviates \
                     {:.1}% from the design value {design_distortion:.6}",
                    100.0 * dist_rel
                ));
            }
        }
    }

    // Cross-correlation between source and error coordinates; independent
    // blocks make the effective sample size the block count.
    let mut cross_max = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let denom = (x_sq[i] * e_sq[j]).sqrt();
            if denom > 0.0 {
                cross_max = cross_max.max(k_xe[(i, j)].abs() / denom);
            }
        }
    }
    let threshold = 3.0 / blocks_f.sqrt();
    if !matches!(channel, Channel::Wire) {
        diagnostics.insert("input_error_crosscorr_max".to_string(), cross_max);
        diagnostics.insert("crosscorr_threshold".to_string(), threshold);
        diagnostics.insert("n_eff".to_string(), blocks_f);
        if cross_max > threshold {
            warnings.push(format!(
                "input-error correlation {cross_max:.5} exceeds the \
                 independence threshold {threshold:.5}"
            ));
        }
        if let Some(k) = excess_kurtosis(err_sq, err_quad, blocks_f * n as f64) {
            diagnostics.insert("error_kurtosis_excess".to_string(), k);
        }
    }

    k_uhat /= blocks_f;
    if let BlockDesign::Feedback(_) = design {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += k_uhat[(i, j)] * k_uhat[(i, j)];
                }
            }
        }
        diagnostics.insert(
            "whitening_offdiag_rel".to_string(),
            off.sqrt() / k_uhat.norm(),
        );
    }

    let mut report = SimReport {
        architecture: design.architecture().to_string(),
        channel: channel.to_string(),
        seed: config.seed,
        n_samples: config.n_samples,
        n_used: blocks,
        design_rate_bits: design.rate_bits(),
        design_distortion,
        empirical_distortion,
        empirical_rate_bits: None,
        rate_std_error: None,
        rate_loss_bits: None,
        rate_loss_bound_bits: rate_loss_bound_bits(),
        bound_satisfied: None,
        diagnostics,
        warnings,
        spectra: None,
    };

    let gaussian_rate = |k: &DMatrix<f64>| -> Result<f64> {
        Ok((log2_det_spd(k)? - n as f64 * sigma_w2.log2()) / (2.0 * n as f64))
    };

    let mut quantized = None;
    match &chan {
        ChannelRuntime::Wire => {}
        ChannelRuntime::Awgn { .. } => {
            let bits = gaussian_rate(&k_uhat)?;
            let mut batch_vals = Vec::with_capacity(batches);
            for b in 0..batches {
                let kb = &k_uhat_batch[b] / batch_blocks[b] as f64;
                batch_vals.push(gaussian_rate(&kb)?);
            }
            let mean = batch_vals.iter().sum::<f64>() / batches as f64;
            let var = batch_vals
                .iter()
                .map(|&r| (r - mean) * (r - mean))
                .sum::<f64>()
                / (batches - 1) as f64;
            finish_rate_fields(&mut report, Some((bits, (var / batches as f64).sqrt())));
        }
        ChannelRuntime::Lattice { .. } => {
            let stream = QuantizedStream {
                dim: n,
                joint: false,
                indices,
                dithers,
            };
            let est = estimate_rate(&stream, &RateScheme::default())?;
            report.diagnostics.insert(
                "rate_dither_cells".to_string(),
                est.dither_bins as f64,
            );
            report
                .diagnostics
                .insert("gaussian_equivalent_rate_bits".to_string(), gaussian_rate(&k_uhat)?);
            report.warnings.extend(est.warnings.iter().cloned());
            finish_rate_fields(&mut report, Some((est.bits_per_dim, est.std_error)));
            quantized = Some(stream);
        }
    }

    Ok(SimRun { report, quantized })
}

// ---------------------------------------------------------------------------
// Stream engine
// ---------------------------------------------------------------------------

struct BranchState {
    source: SourceGenerator,
    x_ring: Ring,
    w_ring: Ring,
    u_ring: Ring,
    x_stat: Ring,
    e_stat: Ring,
    x_trace: Vec<f64>,
    e_trace: Vec<f64>,
    u_trace: Vec<f64>,
}

/// The filters and reference values one stream run works against.
struct StreamPlan<'a> {
    architecture: &'a str,
    pre: Vec<f64>,
    recon: Vec<f64>,
    feedback: Vec<f64>,
    sigma_w2: f64,
    sigma_u2: f64,
    rate_bits: f64,
    distortion: f64,
    target_psd: Option<&'a PsdGrid>,
}

impl StreamPlan<'_> {
    fn fir_len(&self) -> usize {
        self.pre
            .len()
            .max(self.recon.len())
            .max(self.feedback.len())
    }
}

fn shaper_plan<'a>(design: &'a NoiseShaperDesign, architecture: &'a str) -> StreamPlan<'a> {
    StreamPlan {
        architecture,
        pre: design.pre_filter().to_vec(),
        recon: design.reconstruction_filter().to_vec(),
        feedback: design.feedback_filter().to_vec(),
        sigma_w2: design.sigma_w2(),
        sigma_u2: design.sigma_u2(),
        rate_bits: design.rate_bits(),
        distortion: design.distortion(),
        target_psd: Some(design.target_noise_psd()),
    }
}

/// Simulates the scalar noise-shaping loop: one source branch, one channel
/// use per sample. `n_samples` counts time steps; `config.n_parallel` must
/// be 1 (use [`run_parallel_bank`] for joint branches).
pub fn run_feedback_quantizer(
    design: &NoiseShaperDesign,
    source: &SourceSpec,
    channel: Channel,
    config: &SimConfig,
) -> Result<SimRun> {
    if config.n_parallel != 1 {
        return Err(Error::invalid(
            "the scalar loop runs one branch; use the parallel bank for more",
        ));
    }
    run_stream(&shaper_plan(design, "noise-shaper"), source, channel, config)
}

/// Simulates `config.n_parallel` independent noise-shaping branches whose
/// channel uses are coded jointly: with a lattice channel, the branch
/// channel inputs at each step form one vector quantized by the lattice (so
/// the lattice dimension must equal the branch count). With one branch and
/// a scalar lattice this is exactly [`run_feedback_quantizer`].
pub fn run_parallel_bank(
    design: &NoiseShaperDesign,
    source: &SourceSpec,
    channel: Channel,
    config: &SimConfig,
) -> Result<SimRun> {
    run_stream(
        &shaper_plan(design, "noise-shaper-bank"),
        source,
        channel,
        config,
    )
}

/// Feeds the source straight through the channel with no coder around it:
/// the reconstruction is the channel output, so the distortion is the
/// channel noise variance itself and the rate reference is the Gaussian
/// channel's mutual information `log2(1 + var/noise) / 2`. Useful as the
/// baseline the shaped architectures are compared against, and as a
/// raw-channel health check.
pub fn run_test_channel(
    source: &SourceSpec,
    channel: Channel,
    noise_variance: f64,
    config: &SimConfig,
) -> Result<SimRun> {
    if !noise_variance.is_finite() || noise_variance <= 0.0 {
        return Err(Error::invalid(format!(
            "channel noise variance must be positive and finite, got \
             {noise_variance}"
        )));
    }
    source.validate()?;
    let sigma_u2 = source.variance() + noise_variance;
    let flat = PsdGrid::flat(noise_variance, config.grid_size.max(64))?;
    let plan = StreamPlan {
        architecture: "test-channel",
        pre: vec![1.0],
        recon: vec![1.0],
        feedback: vec![0.0],
        sigma_w2: noise_variance,
        sigma_u2,
        rate_bits: 0.5 * (sigma_u2 / noise_variance).log2(),
        distortion: noise_variance,
        target_psd: Some(&flat),
    };
    run_stream(&plan, source, channel, config)
}

fn run_stream(
    plan: &StreamPlan<'_>,
    source: &SourceSpec,
    channel: Channel,
    config: &SimConfig,
) -> Result<SimRun> {
    config.validate()?;
    source.validate()?;
    let n_branches = config.n_parallel;
    let fir_len = plan.fir_len();
    let min_burn = 10 * fir_len;
    let default_burn = min_burn.max(source.recommended_burn_in());
    let burn = match config.burn_in {
        None => default_burn,
        Some(b) if b < min_burn => {
            return Err(Error::invalid(format!(
                "burn-in {b} below the minimum of ten filter lengths \
                 ({min_burn})"
            )));
        }
        Some(b) => b,
    };
    if burn * 2 >= config.n_samples {
        return Err(Error::invalid(format!(
            "burn-in {burn} must be below half the sample budget {}",
            config.n_samples
        )));
    }
    let steps = config.n_samples;
    let post = steps - burn;
    if config.estimate_spectra
        && (post * n_branches < 100 * config.grid_size || post < 2 * config.grid_size)
    {
        return Err(Error::invalid(format!(
            "spectral estimation needs {} retained samples on a grid of \
             {} points, got {}",
            100 * config.grid_size,
            config.grid_size,
            post * n_branches
        )));
    }
    let sigma_w2 = plan.sigma_w2;
    let chan = ChannelRuntime::build(channel, sigma_w2, n_branches)?;

    let (a, a_inv, f) = (&plan.pre, &plan.recon, &plan.feedback);
    let divergence_limit = DIVERGENCE_FACTOR * (1.0 + plan.sigma_u2.sqrt());

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut branches = Vec::with_capacity(n_branches);
    for _ in 0..n_branches {
        branches.push(BranchState {
            source: source.generator()?,
            x_ring: Ring::new(fir_len),
            w_ring: Ring::new(fir_len),
            u_ring: Ring::new(fir_len),
            x_stat: Ring::new(STAT_LAGS + 1),
            e_stat: Ring::new(STAT_LAGS + 1),
            x_trace: Vec::with_capacity(if config.estimate_spectra { post } else { 0 }),
            e_trace: Vec::with_capacity(if config.estimate_spectra { post } else { 0 }),
            u_trace: Vec::with_capacity(if config.estimate_spectra { post } else { 0 }),
        });
    }

    let batches = 16usize;
    let mut dist_sum = 0.0;
    let mut err_quad = 0.0;
    let mut u_sum = 0.0;
    let mut u_sq = 0.0;
    let mut u_sq_batch = vec![0.0f64; batches];
    let mut batch_count = vec![0u64; batches];
    let mut pr_max: f64 = 0.0;
    let mut xx_lag = vec![0.0f64; STAT_LAGS + 1];
    let mut ee_lag = vec![0.0f64; STAT_LAGS + 1];
    let mut xe_lag = vec![0.0f64; 2 * CROSS_LAGS + 1];
    let mut lag_count = 0u64;
    let mut indices: Vec<i64> = Vec::new();
    let mut dithers: Vec<f64> = Vec::new();
    if matches!(chan, ChannelRuntime::Lattice { .. }) {
        indices.reserve(post * n_branches);
        dithers.reserve(post * n_branches);
    }

    let mut x_now = vec![0.0f64; n_branches];
    let mut v_now = DVector::<f64>::zeros(n_branches);
    let mut w_now = vec![0.0f64; n_branches];
    let mut scalar_in = DVector::<f64>::zeros(1);

    for t in 0..steps {
        // Draw order per step: every branch's source sample, then the
        // channel noise or dither. This keeps runs bit-reproducible.
        for (b, branch) in branches.iter_mut().enumerate() {
            let x = branch.source.next_sample(&mut rng);
            x_now[b] = x;
            branch.x_ring.push(x);
            let v = branch.x_ring.dot(a) - branch.w_ring.strictly_causal_dot(f);
            if !v.is_finite() || v.abs() > divergence_limit {
                return Err(Error::SimulationDiverged {
                    step: t as u64,
                    magnitude: v.abs(),
                });
            }
            v_now[b] = v;
        }
        match &chan {
            ChannelRuntime::Wire => w_now.iter_mut().for_each(|w| *w = 0.0),
            ChannelRuntime::Awgn { sigma } => {
                for w in w_now.iter_mut() {
                    let s: f64 = StandardNormal.sample(&mut rng);
                    *w = sigma * s;
                }
            }
            ChannelRuntime::Lattice { quantizer } => {
                let dither = quantizer.sample_dither(&mut rng);
                if n_branches == 1 {
                    scalar_in[0] = v_now[0];
                    let s = quantizer.quantize_subtractive(&scalar_in, &dither);
                    w_now[0] = s.error[0];
                    if t >= burn {
                        indices.extend_from_slice(&s.indices);
                        dithers.push(dither[0]);
                    }
                } else {
                    let s = quantizer.quantize_subtractive(&v_now, &dither);
                    w_now.copy_from_slice(s.error.as_slice());
                    if t >= burn {
                        indices.extend_from_slice(&s.indices);
                        dithers.extend(dither.iter().cloned());
                    }
                }
            }
        }
        for (b, branch) in branches.iter_mut().enumerate() {
            let w = w_now[b];
            branch.w_ring.push(w);
            let uhat = v_now[b] + w;
            branch.u_ring.push(uhat);
            let y = branch.u_ring.dot(a_inv);
            let x = x_now[b];
            let e = y - x;
            branch.x_stat.push(x);
            branch.e_stat.push(e);
            if t < burn {
                continue;
            }
            dist_sum += e * e;
            err_quad += e.powi(4);
            u_sum += uhat;
            u_sq += uhat * uhat;
            let batch = (t - burn) * batches / post;
            u_sq_batch[batch] += uhat * uhat;
            batch_count[batch] += 1;
            pr_max = pr_max.max(e.abs());
            if t >= burn + STAT_LAGS {
                lag_count += 1;
                for l in 0..=STAT_LAGS {
                    xx_lag[l] += x * branch.x_stat.at_lag(l);
                    ee_lag[l] += e * branch.e_stat.at_lag(l);
                }
                for l in 0..=CROSS_LAGS {
                    // Error against past inputs, and input against past
                    // errors (negative lags).
                    xe_lag[CROSS_LAGS + l] += e * branch.x_stat.at_lag(l);
                    if l > 0 {
                        xe_lag[CROSS_LAGS - l] += x * branch.e_stat.at_lag(l);
                    }
                }
            }
            if config.estimate_spectra {
                branch.x_trace.push(x);
                branch.e_trace.push(e);
                branch.u_trace.push(uhat);
            }
        }
    }

    let used = (post * n_branches) as f64;
    let empirical_distortion = dist_sum / used;
    let u_mean = u_sum / used;
    let u_var = u_sq / used - u_mean * u_mean;

    let mut diagnostics = BTreeMap::new();
    let mut warnings = Vec::new();
    let design_distortion = plan.distortion;

    if matches!(channel, Channel::Wire) {
        diagnostics.insert("pr_max_abs_error".to_string(), pr_max);
    } else {
        let dist_rel =
            (empirical_distortion - design_distortion).abs() / design_distortion;
        diagnostics.insert("distortion_rel_deviation".to_string(), dist_rel);
        if dist_rel > DISTORTION_WARN_REL {
            warnings.push(format!(
                "empirical distortion {empirical_distortion:.6} deviates \
                 {:.1}% from the design value {design_distortion:.6}",
                100.0 * dist_rel
            ));
        }
        diagnostics.insert(
            "uhat_variance_rel_deviation".to_string(),
            (u_var - plan.sigma_u2).abs() / plan.sigma_u2,
        );
        diagnostics.insert("uhat_variance".to_string(), u_var);

        // Effective sample size under serial correlation (Bartlett): the
        // variance of a cross-correlation estimate scales with the product
        // of the two autocorrelation sequences.
        let x_var = xx_lag[0] / lag_count as f64;
        let e_var = ee_lag[0] / lag_count as f64;
        let mut denom = 1.0;
        for l in 1..=STAT_LAGS {
            let rho_x = xx_lag[l] / lag_count as f64 / x_var;
            let rho_e = ee_lag[l] / lag_count as f64 / e_var;
            denom += 2.0 * rho_x * rho_e;
        }
        let n_eff = used / denom.max(0.5);
        let threshold = 3.0 / n_eff.sqrt();
        let mut cross_max = 0.0_f64;
        for &c in &xe_lag {
            let rho = c / lag_count as f64 / (x_var * e_var).sqrt();
            cross_max = cross_max.max(rho.abs());
        }
        diagnostics.insert("input_error_crosscorr_max".to_string(), cross_max);
        diagnostics.insert("crosscorr_threshold".to_string(), threshold);
        diagnostics.insert("n_eff".to_string(), n_eff);
        if cross_max > threshold {
            warnings.push(format!(
                "input-error correlation {cross_max:.5} exceeds the \
                 independence threshold {threshold:.5}"
            ));
        }
        if let Some(k) = excess_kurtosis(dist_sum, err_quad, used) {
            diagnostics.insert("error_kurtosis_excess".to_string(), k);
        }
    }

    let mut spectra = None;
    if config.estimate_spectra {
        let mut acc_x = WelchAccumulator::new(config.grid_size)?;
        let mut acc_e = WelchAccumulator::new(config.grid_size)?;
        let mut acc_u = WelchAccumulator::new(config.grid_size)?;
        for branch in &branches {
            acc_x.add_stream(&branch.x_trace);
            acc_e.add_stream(&branch.e_trace);
            acc_u.add_stream(&branch.u_trace);
        }
        let source_psd = acc_x.finish()?;
        let error_psd = acc_e.finish()?;
        let channel_output_psd = acc_u.finish()?;

        // Compare the measured error spectrum with the design target,
        // subsampling the (finer) design grid onto the estimation grid.
        if let Some(target) = plan.target_psd {
            if target.grid_size() % config.grid_size == 0 {
                let stride = target.grid_size() / config.grid_size;
                let target_sub: Vec<f64> = (0..config.grid_size)
                    .map(|j| target.values()[j * stride])
                    .collect();
                let num: f64 = error_psd
                    .values()
                    .iter()
                    .zip(&target_sub)
                    .map(|(&g, &w)| (g - w) * (g - w))
                    .sum();
                let den: f64 = target_sub.iter().map(|&w| w * w).sum();
                diagnostics.insert("error_psd_rel_l2".to_string(), (num / den).sqrt());
            } else {
                warnings.push(format!(
                    "estimation grid {} does not divide the design grid {}; \
                     skipping the error-spectrum comparison",
                    config.grid_size,
                    target.grid_size()
                ));
            }
        }
        let flat: Vec<f64> = vec![plan.sigma_u2; config.grid_size];
        let num: f64 = channel_output_psd
            .values()
            .iter()
            .zip(&flat)
            .map(|(&g, &w)| (g - w) * (g - w))
            .sum();
        let den: f64 = flat.iter().map(|&w| w * w).sum();
        diagnostics.insert(
            "uhat_psd_flatness_rel_l2".to_string(),
            (num / den).sqrt(),
        );
        spectra = Some(SimSpectra {
            source_psd,
            error_psd,
            channel_output_psd,
        });
    }

    let mut report = SimReport {
        architecture: plan.architecture.to_string(),
        channel: channel.to_string(),
        seed: config.seed,
        n_samples: config.n_samples,
        n_used: post * n_branches,
        design_rate_bits: plan.rate_bits,
        design_distortion,
        empirical_distortion,
        empirical_rate_bits: None,
        rate_std_error: None,
        rate_loss_bits: None,
        rate_loss_bound_bits: rate_loss_bound_bits(),
        bound_satisfied: None,
        diagnostics,
        warnings,
        spectra,
    };

    let mut quantized = None;
    match &chan {
        ChannelRuntime::Wire => {}
        ChannelRuntime::Awgn { .. } => {
            let bits = 0.5 * (u_var / sigma_w2).log2();
            let mut batch_vals = Vec::with_capacity(batches);
            for b in 0..batches {
                let var_b = u_sq_batch[b] / batch_count[b] as f64 - u_mean * u_mean;
                batch_vals.push(0.5 * (var_b / sigma_w2).log2());
            }
            let mean = batch_vals.iter().sum::<f64>() / batches as f64;
            let var = batch_vals
                .iter()
                .map(|&r| (r - mean) * (r - mean))
                .sum::<f64>()
                / (batches - 1) as f64;
            finish_rate_fields(&mut report, Some((bits, (var / batches as f64).sqrt())));
        }
        ChannelRuntime::Lattice { .. } => {
            let stream = QuantizedStream {
                dim: n_branches,
                joint: n_branches > 1,
                indices,
                dithers,
            };
            let est = estimate_rate(&stream, &RateScheme::default())?;
            report
                .diagnostics
                .insert("rate_dither_cells".to_string(), est.dither_bins as f64);
            report.diagnostics.insert(
                "gaussian_equivalent_rate_bits".to_string(),
                0.5 * (u_var / sigma_w2).log2(),
            );
            report.warnings.extend(est.warnings.iter().cloned());
            finish_rate_fields(&mut report, Some((est.bits_per_dim, est.std_error)));
            quantized = Some(stream);
        }
    }

    Ok(SimRun { report, quantized })
}
