//! Empirical coding-rate estimation for dithered quantizer outputs.
//!
//! The operational rate of an entropy-coded subtractively dithered quantizer
//! is the conditional entropy of the quantizer symbols given the dither.
//! This module estimates it by stratifying each dither coordinate into
//! equal-population quantile cells, computing a Miller-Madow-corrected
//! plug-in entropy inside each cell, and averaging. Standard errors come
//! from contiguous batch means that share the full-sample cell boundaries.
//!
//! Two alphabets are supported, matching the two architectures:
//!
//! * **per-coordinate** (`joint = false`): each coordinate is treated as a
//!   separately entropy-coded scalar symbol conditioned on its own dither
//!   coordinate — the right model for per-channel scalar quantizers.
//! * **joint** (`joint = true`): the index tuple is one jointly coded
//!   symbol. Its conditional entropy is decomposed by the chain rule into
//!   per-coordinate terms, each conditioning coordinate `k`'s symbol on the
//!   tuple of earlier symbols (an interned prefix context) and on the
//!   quantile cell of its own dither coordinate. The prefix context carries
//!   the inter-coordinate redundancy of structured lattices (parity and
//!   coset constraints), while the dither cell carries the dominant dither
//!   dependence, which is coordinate-local. Conditioning on strictly less
//!   than the full dither vector can only overstate the entropy, so the
//!   estimate errs on the conservative side, like the scalar estimator.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum total scalar samples for a usable estimate.
const MIN_SCALAR_SAMPLES: usize = 100_000;

/// Minimum average occupancy per (dither cell, symbol) pair before the
/// dither stratification is coarsened.
const MIN_CELL_OCCUPANCY: f64 = 8.0;

/// A recorded stream of quantizer outputs and the dithers that produced
/// them, interleaved coordinate-major (`dim` values per quantizer use).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedStream {
    /// Coordinates per quantizer use.
    pub dim: usize,
    /// `true` to treat each index tuple as one jointly coded symbol;
    /// `false` to rate each coordinate as a separately coded scalar.
    pub joint: bool,
    /// Quantizer symbols, `dim` per use.
    pub indices: Vec<i64>,
    /// Dither coordinates, `dim` per use, aligned with `indices`.
    pub dithers: Vec<f64>,
}

impl QuantizedStream {
    /// Number of quantizer uses recorded.
    pub fn n_vectors(&self) -> usize {
        self.indices.len() / self.dim.max(1)
    }
}

/// Estimation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateScheme {
    /// Quantile cells per dither coordinate (power of two); automatically
    /// halved when the sample is too small to populate them.
    pub dither_bins: usize,
    /// Contiguous batches used for the standard error.
    pub batches: usize,
}

impl Default for RateScheme {
    fn default() -> Self {
        RateScheme {
            dither_bins: 16,
            batches: 16,
        }
    }
}

/// An empirical rate with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Conditional entropy estimate, bits per coordinate.
    pub bits_per_dim: f64,
    /// Batch-means standard error, bits per coordinate.
    pub std_error: f64,
    /// Quantizer uses consumed.
    pub n_vectors: usize,
    /// Dither cells actually used after any coarsening.
    pub dither_bins: usize,
    /// Non-fatal anomalies (cell coarsening and the like).
    pub warnings: Vec<String>,
}

/// Equal-population cell boundaries (upper edges, exclusive) for one dither
/// coordinate.
fn quantile_boundaries(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    (1..bins)
        .map(|j| sorted[j * sorted.len() / bins])
        .collect()
}

fn assign_cell(boundaries: &[f64], x: f64) -> usize {
    boundaries.partition_point(|&b| b <= x)
}

/// Plug-in entropy in bits, optionally with the Miller-Madow bias
/// correction `(K - 1) / (2 n ln 2)`.
fn entropy_bits<'a>(
    counts: impl Iterator<Item = &'a u64>,
    miller_madow: bool,
) -> f64 {
    let mut n = 0u64;
    let mut sum = 0.0;
    let mut support = 0u64;
    for &c in counts {
        if c == 0 {
            continue;
        }
        n += c;
        support += 1;
        sum += c as f64 * (c as f64).log2();
    }
    if n == 0 {
        return 0.0;
    }
    let mut h = (n as f64).log2() - sum / n as f64;
    if miller_madow {
        h += (support.saturating_sub(1)) as f64
            / (2.0 * n as f64 * std::f64::consts::LN_2);
    }
    h.max(0.0)
}

/// Estimates the conditional entropy of quantizer symbols given the dither,
/// in bits per coordinate, with a batch-means standard error.
///
/// Requires at least `100_000` scalar samples (`dim *` quantizer uses). When
/// the requested dither stratification would leave fewer than eight samples
/// per (cell, symbol) pair on average, the cell count is halved until it
/// fits, and a warning records each step.
pub fn estimate_rate(stream: &QuantizedStream, scheme: &RateScheme) -> Result<RateEstimate> {
    let dim = stream.dim;
    if dim == 0 {
        return Err(Error::invalid("quantized stream dimension must be at least 1"));
    }
    if stream.indices.len() != stream.dithers.len() {
        return Err(Error::DimensionMismatch {
            context: "quantized stream index/dither alignment",
            expected: stream.indices.len(),
            actual: stream.dithers.len(),
        });
    }
    if stream.indices.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            context: "quantized stream framing",
            expected: dim * (stream.indices.len() / dim + 1),
            actual: stream.indices.len(),
        });
    }
    if stream.indices.len() < MIN_SCALAR_SAMPLES {
        return Err(Error::invalid(format!(
            "rate estimation needs at least {MIN_SCALAR_SAMPLES} scalar \
             samples, got {}",
            stream.indices.len()
        )));
    }
    if !(scheme.dither_bins.is_power_of_two()) {
        return Err(Error::invalid(format!(
            "dither cell count must be a power of two, got {}",
            scheme.dither_bins
        )));
    }
    let n = stream.n_vectors();
    if scheme.batches < 2 || n < 20 * scheme.batches {
        return Err(Error::invalid(format!(
            "need at least 2 and at most n/20 batches, got {} for {n} vectors",
            scheme.batches
        )));
    }

    let mut warnings = Vec::new();
    let mut bins = scheme.dither_bins;
    loop {
        let outcome = conditional_entropy(stream, bins, scheme.batches);
        if outcome.occupancy >= MIN_CELL_OCCUPANCY || bins == 1 {
            if outcome.occupancy < MIN_CELL_OCCUPANCY {
                warnings.push(format!(
                    "average cell occupancy {:.2} below {MIN_CELL_OCCUPANCY} \
                     even with a single dither cell; the estimate is biased low",
                    outcome.occupancy
                ));
            }
            let mean = outcome.batch_values.iter().sum::<f64>()
                / outcome.batch_values.len() as f64;
            let var = outcome
                .batch_values
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (outcome.batch_values.len() - 1) as f64;
            let std_error = (var / outcome.batch_values.len() as f64).sqrt();
            return Ok(RateEstimate {
                bits_per_dim: outcome.bits_per_dim,
                std_error,
                n_vectors: n,
                dither_bins: bins,
                warnings,
            });
        }
        bins /= 2;
        warnings.push(format!(
            "average cell occupancy {:.2} below {MIN_CELL_OCCUPANCY}; \
             coarsening dither stratification to {bins} cells",
            outcome.occupancy
        ));
    }
}

struct EntropyOutcome {
    bits_per_dim: f64,
    batch_values: Vec<f64>,
    occupancy: f64,
}

/// Shared worker for both alphabets. Coordinates are processed in order;
/// each contributes the conditional entropy of its symbol given a context
/// cell. For separately coded scalars the context is the quantile cell of
/// the coordinate's own dither. For jointly coded tuples (`stream.joint`)
/// the context is additionally refined by the interned tuple of the earlier
/// coordinates' symbols, so the summed terms telescope into the joint
/// conditional entropy by the chain rule.
fn conditional_entropy(
    stream: &QuantizedStream,
    bins: usize,
    batches: usize,
) -> EntropyOutcome {
    let dim = stream.dim;
    let n = stream.n_vectors();
    let mut total_bits = 0.0;
    let mut batch_bits = vec![0.0; batches];
    let mut cells_total = 0u64;

    // One interned symbol-history context per vector, refined after each
    // coordinate when the tuple is jointly coded; all zeros otherwise.
    let mut contexts: Vec<u32> = vec![0; n];
    let mut coord_dithers = Vec::with_capacity(n);
    for c in 0..dim {
        coord_dithers.clear();
        coord_dithers.extend((0..n).map(|v| stream.dithers[v * dim + c]));
        let boundaries = quantile_boundaries(&coord_dithers, bins);

        // counts[(cell, symbol)] over the full sample; batch_counts adds the
        // batch id so batch entropies reuse the same stratification.
        let mut counts: BTreeMap<(usize, i64), u64> = BTreeMap::new();
        let mut batch_counts: BTreeMap<(usize, usize, i64), u64> = BTreeMap::new();
        for v in 0..n {
            let cell = contexts[v] as usize * bins
                + assign_cell(&boundaries, coord_dithers[v]);
            let symbol = stream.indices[v * dim + c];
            *counts.entry((cell, symbol)).or_insert(0) += 1;
            let b = v * batches / n;
            *batch_counts.entry((b, cell, symbol)).or_insert(0) += 1;
        }
        cells_total += counts.len() as u64;

        total_bits += grouped_conditional_entropy(
            counts.iter().map(|(&(cell, _), &c)| (cell, c)),
            n as u64,
            true,
        );
        for (b, bits) in batch_bits.iter_mut().enumerate() {
            let batch_n: u64 = batch_counts
                .range((b, 0, i64::MIN)..=(b, usize::MAX, i64::MAX))
                .map(|(_, &c)| c)
                .sum();
            *bits += grouped_conditional_entropy(
                batch_counts
                    .range((b, 0, i64::MIN)..=(b, usize::MAX, i64::MAX))
                    .map(|(&(_, cell, _), &c)| (cell, c)),
                batch_n,
                false,
            );
        }

        if stream.joint && c + 1 < dim {
            let mut intern: HashMap<(u32, i64), u32> = HashMap::new();
            for (v, ctx) in contexts.iter_mut().enumerate() {
                let key = (*ctx, stream.indices[v * dim + c]);
                let next_id = intern.len() as u32;
                *ctx = *intern.entry(key).or_insert(next_id);
            }
        }
    }

    EntropyOutcome {
        bits_per_dim: total_bits / dim as f64,
        batch_values: batch_bits.iter().map(|&b| b / dim as f64).collect(),
        occupancy: (n * dim) as f64 / cells_total as f64,
    }
}

/// Conditional entropy `H(symbol | cell)` in bits from an iterator of
/// `(cell, count)` pairs grouped by cell (sorted order), weighting each
/// cell's entropy by its population.
fn grouped_conditional_entropy(
    pairs: impl Iterator<Item = (usize, u64)>,
    total: u64,
    miller_madow: bool,
) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    let mut current_cell = None;
    let mut cell_counts: Vec<u64> = Vec::new();
    let flush = |cell_counts: &mut Vec<u64>, h: &mut f64| {
        if !cell_counts.is_empty() {
            let cell_n: u64 = cell_counts.iter().sum();
            *h += cell_n as f64 / total as f64
                * entropy_bits(cell_counts.iter(), miller_madow);
            cell_counts.clear();
        }
    };
    for (cell, count) in pairs {
        if current_cell != Some(cell) {
            flush(&mut cell_counts, &mut h);
            current_cell = Some(cell);
        }
        cell_counts.push(count);
    }
    flush(&mut cell_counts, &mut h);
    h
}
