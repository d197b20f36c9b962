//! Release acceptance checks.
//!
//! Each test verifies one numbered release criterion end to end and prints a
//! single `criterion N PASS/FAIL` line with the measured values (visible
//! with `cargo test --test acceptance -- --nocapture`). Tolerances follow
//! the stated contracts: analytic identities at 1e-9..1e-6, design algebra
//! at 1e-9 relative, and Monte-Carlo quantities at multiples of their
//! estimated standard errors.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rdperp::coder::{
    design_causal_transform, design_feedback_transform, design_noise_shaper,
};
use rdperp::quantizer::LatticeKind;
use rdperp::rdf;
use rdperp::sim::{self, Channel, SimConfig, SimRun, SourceSpec};
use rdperp::spectra::{ar_to_psd, psd_to_covariance, ArModel, CovarianceMatrix, PsdGrid};

/// Serializes the Monte-Carlo-heavy criteria so each one's wall-clock budget
/// measures its own work instead of contention with its neighbours.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_slot() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Collects named sub-checks for one criterion and renders them as a single
/// PASS/FAIL line.
struct Criterion {
    number: usize,
    title: &'static str,
    started: Instant,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn start(number: usize, title: &'static str) -> Self {
        Criterion {
            number,
            title,
            started: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.checks.push((ok, detail));
    }

    /// Prints the line and panics on any failed sub-check. A positive
    /// `budget_s` adds a wall-clock sub-check.
    fn finish(mut self, budget_s: f64) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if budget_s > 0.0 {
            self.check(
                elapsed <= budget_s,
                format!("runtime {elapsed:.1}s (budget {budget_s:.0}s)"),
            );
        } else {
            self.check(true, format!("runtime {elapsed:.1}s"));
        }
        let ok = self.checks.iter().all(|(ok, _)| *ok);
        let status = if ok { "PASS" } else { "FAIL" };
        let details: Vec<String> = self
            .checks
            .iter()
            .map(|(ok, d)| {
                if *ok {
                    d.clone()
                } else {
                    format!("FAILED[{d}]")
                }
            })
            .collect();
        println!(
            "criterion {} {status}: {} — {}",
            self.number,
            self.title,
            details.join("; ")
        );
        assert!(ok, "criterion {} failed: {}", self.number, details.join("; "));
    }
}

fn ar_psd(coeff: f64, grid: usize) -> PsdGrid {
    let model = ArModel::new(vec![coeff], 1.0).unwrap();
    ar_to_psd(&model, grid).unwrap()
}

/// 20 geometrically spaced distortions inside `(lo, hi)`.
fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..count)
        .map(|i| lo * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Closed-form white-source rate, cross-checked by brute-force search
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_white_closed_form() {
    let mut c = Criterion::start(1, "white-source closed form");
    let mut max_solver_dev: f64 = 0.0;
    let mut max_grid_dev: f64 = 0.0;
    for &variance in &[0.5, 1.0, 4.0] {
        for &d in &[0.1, 1.0, 10.0] {
            let psd = PsdGrid::flat(variance, 64).unwrap();
            let want = 0.5 * (1.0 + variance / d).log2();
            let (point, _) = rdf::uncorr_at_distortion(&psd, d).unwrap();
            max_solver_dev = max_solver_dev.max((point.rate_bits - want).abs());

            // Independent brute-force search over the noise parameter: scan a
            // dense geometric grid, take the parameter whose distortion lands
            // closest to the target, and compare rates.
            let center = 4.0 * d * (d + variance) / variance;
            let grid = log_spaced(center / 100.0, center * 100.0, 20_001);
            let mut best = (f64::INFINITY, 0.0);
            for alpha in grid {
                let (p, _) = rdf::uncorr_from_alpha(&psd, alpha).unwrap();
                let miss = (p.distortion - d).abs();
                if miss < best.0 {
                    best = (miss, p.rate_bits);
                }
            }
            max_grid_dev = max_grid_dev.max((best.1 - want).abs());
        }
    }
    c.check(
        max_solver_dev <= 1e-9,
        format!("solver vs closed form max dev {max_solver_dev:.2e} (tol 1e-9)"),
    );
    c.check(
        max_grid_dev <= 2e-3,
        format!("brute-force grid vs closed form max dev {max_grid_dev:.2e}"),
    );
    c.finish(1.0);
}

// ---------------------------------------------------------------------------
// 2. Water-filling bisection vs a dense water-level grid
// ---------------------------------------------------------------------------

/// Dense water-level oracle: distortion and rate at `points` log-spaced
/// levels, evaluated in O(log) per level from sorted prefix sums.
struct LevelOracle {
    dists: Vec<f64>,
    rates: Vec<f64>,
}

impl LevelOracle {
    fn build(psd: &PsdGrid, lo: f64, hi: f64, points: usize) -> Self {
        let mut s: Vec<f64> = psd.values().to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len();
        let mut sum = vec![0.0];
        let mut log_sum = vec![0.0];
        for &v in &s {
            sum.push(sum.last().unwrap() + v);
            log_sum.push(log_sum.last().unwrap() + v.log2());
        }
        let mut dists = Vec::with_capacity(points);
        let mut rates = Vec::with_capacity(points);
        for theta in log_spaced(lo, hi, points) {
            let idx = s.partition_point(|&v| v < theta);
            let d = (sum[idx] + theta * (n - idx) as f64) / n as f64;
            let r = (log_sum[n] - log_sum[idx] - (n - idx) as f64 * theta.log2())
                / (2.0 * n as f64);
            dists.push(d);
            rates.push(r.max(0.0));
        }
        LevelOracle { dists, rates }
    }

    /// Rate at the given distortion by linear interpolation between the two
    /// bracketing grid levels.
    fn rate_at(&self, d: f64) -> f64 {
        let i = self.dists.partition_point(|&v| v < d).max(1);
        let (d0, d1) = (self.dists[i - 1], self.dists[i]);
        let (r0, r1) = (self.rates[i - 1], self.rates[i]);
        r0 + (r1 - r0) * (d - d0) / (d1 - d0)
    }
}

#[test]
fn criterion_2_waterfilling_matches_dense_grid() {
    let mut c = Criterion::start(2, "water-filling vs dense level grid");
    for &a in &[0.5, 0.9] {
        let psd = ar_psd(a, 4096);
        let variance = psd.variance();
        let targets = log_spaced(0.01 * variance, 0.9 * variance, 20);
        let oracle =
            LevelOracle::build(&psd, 0.003 * variance, psd.max_value(), 100_000);
        let mut max_dev: f64 = 0.0;
        for &d in &targets {
            let (point, _) = rdf::shannon_at_distortion(&psd, d).unwrap();
            max_dev = max_dev.max((point.rate_bits - oracle.rate_at(d)).abs());
        }
        c.check(
            max_dev <= 1e-6,
            format!("model a={a}: max |bisection - grid oracle| {max_dev:.2e} (tol 1e-6)"),
        );
    }
    c.finish(10.0);
}

// ---------------------------------------------------------------------------
// 3. The uncorrelation penalty and the shape of its distortion spectrum
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_uncorrelation_penalty() {
    let mut c = Criterion::start(3, "uncorrelation penalty");
    for &a in &[0.5, 0.9] {
        let psd = ar_psd(a, 4096);
        let variance = psd.variance();
        let mut min_gap_low: f64 = f64::INFINITY;
        let mut min_gap_high: f64 = f64::INFINITY;
        for &d in &log_spaced(0.01 * variance, 0.9 * variance, 20) {
            let (classical, _) = rdf::shannon_at_distortion(&psd, d).unwrap();
            let (uncorr, _) = rdf::uncorr_at_distortion(&psd, d).unwrap();
            let gap = uncorr.rate_bits - classical.rate_bits;
            if d >= 0.1 * variance {
                min_gap_high = min_gap_high.min(gap);
            } else {
                min_gap_low = min_gap_low.min(gap);
            }
        }
        c.check(
            min_gap_low >= -1e-12 && min_gap_high > 1e-9,
            format!(
                "model a={a}: min gap {min_gap_low:.2e} (all d), {min_gap_high:.2e} \
                 (d >= 0.1 var, strict)"
            ),
        );
    }

    // At a distortion equal to the variance the classical curve has reached
    // zero (the solver reports the domain edge), while the uncorrelated
    // curve still charges half a bit on a white source.
    let flat = PsdGrid::flat(1.0, 64).unwrap();
    let classical_at_edge = rdf::shannon_at_distortion(&flat, 1.0);
    let (uncorr_at_edge, _) = rdf::uncorr_at_distortion(&flat, 1.0).unwrap();
    let half_bit_dev = (uncorr_at_edge.rate_bits - 0.5).abs();
    c.check(
        classical_at_edge.is_err() && half_bit_dev <= 1e-6,
        format!(
            "white source at d = variance: classical curve at domain edge (rate 0), \
             uncorrelated rate dev from 1/2 bit {half_bit_dev:.2e}"
        ),
    );

    // The optimal uncorrelated distortion spectrum is genuinely colored.
    let (_, s_z) = rdf::uncorr_at_distortion(&ar_psd(0.9, 4096), 0.5).unwrap();
    let ratio = s_z.max_value() / s_z.min_value();
    c.check(
        ratio > 1.5,
        format!("distortion spectrum max/min {ratio:.3} (must exceed 1.5)"),
    );
    c.finish(0.0);
}

// ---------------------------------------------------------------------------
// 4. Matrix coder designs: exact algebraic identities on random sources
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_matrix_designs() {
    let mut c = Criterion::start(4, "matrix design identities");
    let mut rng = ChaCha12Rng::seed_from_u64(40);
    let sigma_w2 = 1.0;
    let mut plain_factor: f64 = 0.0;
    let mut plain_rate: f64 = 0.0;
    let mut fb_factor: f64 = 0.0;
    let mut fb_diag: f64 = 0.0;
    let mut fb_rate: f64 = 0.0;
    for trial in 0..20 {
        let n = if trial % 2 == 0 { 8 } else { 16 };
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let k_x = CovarianceMatrix::new(
            &b * b.transpose() + DMatrix::identity(n, n) * (0.05 * n as f64),
        )
        .unwrap();
        let d = (0.05 + 0.5 * rng.random::<f64>()) * k_x.trace_mean();
        let (point, _) = rdf::vector_uncorr_rdf(&k_x, d).unwrap();

        // Plain causal transform: exact error-covariance factorization, and
        // the joint (log-determinant) channel rate equals the vector rate.
        let plain = design_causal_transform(&k_x, d, sigma_w2).unwrap();
        plain_factor = plain_factor.max(plain.factorization_residual().unwrap());
        let k_uhat = plain.transform() * k_x.as_matrix() * plain.transform().transpose()
            + DMatrix::identity(n, n) * sigma_w2;
        let chol = k_uhat.cholesky().expect("channel output covariance is SPD");
        let log2_det: f64 = (0..n).map(|i| chol.l()[(i, i)].log2()).sum::<f64>() * 2.0;
        let rate_joint = (log2_det - n as f64 * sigma_w2.log2()) / (2.0 * n as f64);
        plain_rate = plain_rate.max((rate_joint - point.rate_bits).abs());

        // Error-feedback transform: factorization identity, whitened channel
        // outputs, and the per-channel scalar rates sum to the vector rate.
        let fb = design_feedback_transform(&k_x, d, sigma_w2).unwrap();
        fb_factor = fb_factor.max(fb.feedback_residual());
        fb_diag = fb_diag.max(fb.whitening_residual(&k_x).unwrap());
        let sum_rate = fb
            .channel_variances()
            .iter()
            .map(|&v| 0.5 * (v / sigma_w2).log2())
            .sum::<f64>()
            / n as f64;
        fb_rate = fb_rate.max((sum_rate - point.rate_bits).abs());
    }
    c.check(
        plain_factor <= 1e-9,
        format!("plain factorization residual max {plain_factor:.2e} (tol 1e-9)"),
    );
    c.check(
        plain_rate <= 1e-8,
        format!("plain joint rate vs vector rate max dev {plain_rate:.2e} (tol 1e-8)"),
    );
    c.check(
        fb_factor <= 1e-9,
        format!("feedback factorization residual max {fb_factor:.2e} (tol 1e-9)"),
    );
    c.check(
        fb_diag <= 1e-9,
        format!("channel output covariance off-diagonal max {fb_diag:.2e} (tol 1e-9)"),
    );
    c.check(
        fb_rate <= 1e-8,
        format!("per-channel rate sum vs vector rate max dev {fb_rate:.2e} (tol 1e-8)"),
    );
    c.finish(5.0);
}

// ---------------------------------------------------------------------------
// 5. Noise-shaper realization over the exact-noise channel
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_noise_shaper_awgn() {
    let _slot = heavy_slot();
    let mut c = Criterion::start(5, "noise shaper over exact-noise channel");
    let psd = ar_psd(0.9, 8192);
    let design = design_noise_shaper(&psd, 0.5, 1.0, 128).unwrap();
    let model = ArModel::new(vec![0.9], 1.0).unwrap();
    let mut config = SimConfig::new(1_000_000, 50);
    config.estimate_spectra = true;
    let run = sim::run_feedback_quantizer(
        &design,
        &SourceSpec::Ar { model },
        Channel::Awgn,
        &config,
    )
    .unwrap();
    let report = &run.report;
    let spec_err = report.diagnostics["error_psd_rel_l2"];
    let corr = report.diagnostics["input_error_crosscorr_max"];
    let corr_tol = report.diagnostics["crosscorr_threshold"];
    let rate_dev = (report.empirical_rate_bits.unwrap() - design.rate_bits()).abs();
    c.check(
        spec_err < 0.05,
        format!("error spectrum rel L2 vs target {spec_err:.4} (tol 0.05)"),
    );
    c.check(
        corr < corr_tol,
        format!("max input/error correlation {corr:.5} (3-sigma threshold {corr_tol:.5})"),
    );
    c.check(
        rate_dev <= 2e-2,
        format!("channel rate vs design rate dev {rate_dev:.4} bits (tol 0.02)"),
    );
    c.finish(60.0);
}

// ---------------------------------------------------------------------------
// 6. Scalar dithered quantizer stays within the universal rate-loss bound
// ---------------------------------------------------------------------------

fn loss_line(label: &str, run: &SimRun) -> (f64, f64, bool, String) {
    let report = &run.report;
    let loss = report.rate_loss_bits.unwrap();
    let se = report.rate_std_error.unwrap();
    let ok = report.bound_satisfied.unwrap();
    let line = format!(
        "{label}: loss {loss:.4} +- {se:.4} vs bound {:.4}",
        report.rate_loss_bound_bits
    );
    (loss, se, ok, line)
}

#[test]
fn criterion_6_scalar_quantizer_bound() {
    let _slot = heavy_slot();
    let mut c = Criterion::start(6, "scalar quantizer rate-loss bound");

    // Colored source through the sample-by-sample noise shaper.
    let psd = ar_psd(0.9, 8192);
    let shaper = design_noise_shaper(&psd, 0.5, 1.0, 128).unwrap();
    let model = ArModel::new(vec![0.9], 1.0).unwrap();
    let run_ar = sim::run_feedback_quantizer(
        &shaper,
        &SourceSpec::Ar { model },
        Channel::Lattice(LatticeKind::Z1),
        &SimConfig::new(1_000_000, 60),
    )
    .unwrap();
    let (_, _, ok, line) = loss_line("shaper on colored source", &run_ar);
    c.check(ok, line);

    // White source: the scalar cell's space-filling loss is nearly tight, so
    // the measured loss must also stay above 0.2 bits.
    let flat = PsdGrid::flat(1.0, 1024).unwrap();
    let white_shaper = design_noise_shaper(&flat, 0.5, 1.0, 16).unwrap();
    let run_white = sim::run_feedback_quantizer(
        &white_shaper,
        &SourceSpec::White { variance: 1.0 },
        Channel::Lattice(LatticeKind::Z1),
        &SimConfig::new(1_000_000, 61),
    )
    .unwrap();
    let (loss_w, _, ok_w, line_w) = loss_line("shaper on white source", &run_white);
    c.check(ok_w && loss_w >= 0.2, format!("{line_w}, floor 0.2"));

    // Colored blocks through the error-feedback transform coder.
    let k_x = psd_to_covariance(&psd, 8).unwrap();
    let fb = design_feedback_transform(&k_x, 0.5, 1.0).unwrap();
    let run_fb = sim::run_transform_coder(
        (&fb).into(),
        &k_x,
        Channel::Lattice(LatticeKind::Z1),
        &SimConfig::new(125_000, 62),
    )
    .unwrap();
    let (_, _, ok_fb, line_fb) = loss_line("feedback transform blocks", &run_fb);
    c.check(ok_fb, line_fb);

    c.finish(120.0);
}

// ---------------------------------------------------------------------------
// 7. Rate loss shrinks as the lattice dimension grows
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_lattice_dimension_trend() {
    let _slot = heavy_slot();
    let mut c = Criterion::start(7, "lattice dimension trend");
    let flat = PsdGrid::flat(1.0, 1024).unwrap();
    let design = design_noise_shaper(&flat, 0.5, 1.0, 16).unwrap();
    let mut results: Vec<(f64, f64, &str)> = Vec::new();
    for (kind, label) in [
        (LatticeKind::Z1, "z1"),
        (LatticeKind::D4, "d4"),
        (LatticeKind::E8, "e8"),
    ] {
        let mut config = SimConfig::new(1_000_000, 70);
        config.n_parallel = kind.dim();
        let run = sim::run_parallel_bank(
            &design,
            &SourceSpec::White { variance: 1.0 },
            Channel::Lattice(kind),
            &config,
        )
        .unwrap();
        let loss = run.report.rate_loss_bits.unwrap();
        let se = run.report.rate_std_error.unwrap();
        results.push((loss, se, label));
    }
    let detail = results
        .iter()
        .map(|(loss, se, label)| format!("{label} loss {loss:.4} +- {se:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut monotone = true;
    for pair in results.windows(2) {
        let (l0, s0, _) = pair[0];
        let (l1, s1, _) = pair[1];
        if l1 > l0 + 2.0 * (s0 * s0 + s1 * s1).sqrt() {
            monotone = false;
        }
    }
    c.check(
        monotone,
        format!("non-increasing within 2 sigma: {detail}"),
    );
    let margin = results[0].0 - results[2].0;
    c.check(
        margin >= 0.05,
        format!("largest lattice beats scalar by {margin:.4} bits (floor 0.05)"),
    );
    c.finish(0.0);
}

// ---------------------------------------------------------------------------
// 8. Perfect reconstruction and bit-exact determinism for every architecture
// ---------------------------------------------------------------------------

fn assert_deterministic(label: &str, a: &SimRun, b: &SimRun, c: &mut Criterion) {
    c.check(
        a.report == b.report && a.quantized == b.quantized,
        format!("{label} reruns identical"),
    );
}

#[test]
fn criterion_8_reconstruction_and_determinism() {
    let _slot = heavy_slot();
    let mut c = Criterion::start(8, "perfect reconstruction and determinism");
    let psd = ar_psd(0.9, 8192);
    let model = ArModel::new(vec![0.9], 1.0).unwrap();
    let ar_source = SourceSpec::Ar { model };
    let white = SourceSpec::White { variance: 1.0 };
    let k_x = psd_to_covariance(&psd, 8).unwrap();
    let plain = design_causal_transform(&k_x, 0.5, 1.0).unwrap();
    let fb = design_feedback_transform(&k_x, 0.5, 1.0).unwrap();
    let shaper = design_noise_shaper(&psd, 0.5, 1.0, 128).unwrap();
    let flat = PsdGrid::flat(1.0, 1024).unwrap();
    let white_shaper = design_noise_shaper(&flat, 0.5, 1.0, 16).unwrap();

    // Wire channel: the linear stages must reconstruct the input exactly;
    // the stream architectures are limited by the designed FIR truncation
    // rather than roundoff, hence the coarser tolerance.
    let cfg_blocks = SimConfig::new(10_000, 80);
    let wire_tc =
        sim::run_test_channel(&white, Channel::Wire, 0.25, &SimConfig::new(120_000, 80))
            .unwrap();
    let wire_plain =
        sim::run_transform_coder((&plain).into(), &k_x, Channel::Wire, &cfg_blocks).unwrap();
    let wire_fb =
        sim::run_transform_coder((&fb).into(), &k_x, Channel::Wire, &cfg_blocks).unwrap();
    let wire_shaper = sim::run_feedback_quantizer(
        &shaper,
        &ar_source,
        Channel::Wire,
        &SimConfig::new(100_000, 81),
    )
    .unwrap();
    let mut cfg_bank = SimConfig::new(50_000, 82);
    cfg_bank.n_parallel = 4;
    let wire_bank =
        sim::run_parallel_bank(&white_shaper, &white, Channel::Wire, &cfg_bank).unwrap();
    for (label, run, tol) in [
        ("test channel", &wire_tc, 1e-9),
        ("plain transform", &wire_plain, 1e-9),
        ("feedback transform", &wire_fb, 1e-9),
        ("noise shaper", &wire_shaper, 1e-3),
        ("parallel bank", &wire_bank, 1e-3),
    ] {
        let pr = run.report.diagnostics["pr_max_abs_error"];
        c.check(
            pr < tol,
            format!("{label} wire reconstruction error {pr:.2e} (tol {tol:.0e})"),
        );
    }

    // Same configuration, same seed: every architecture must reproduce its
    // report and its recorded symbol stream bit for bit.
    let cfg_stream = SimConfig::new(120_000, 83);
    let reruns: Vec<(&str, SimRun, SimRun)> = vec![
        (
            "test channel",
            sim::run_test_channel(&white, Channel::Lattice(LatticeKind::Z1), 0.25, &cfg_stream)
                .unwrap(),
            sim::run_test_channel(&white, Channel::Lattice(LatticeKind::Z1), 0.25, &cfg_stream)
                .unwrap(),
        ),
        (
            "plain transform",
            sim::run_transform_coder(
                (&plain).into(),
                &k_x,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(15_000, 84),
            )
            .unwrap(),
            sim::run_transform_coder(
                (&plain).into(),
                &k_x,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(15_000, 84),
            )
            .unwrap(),
        ),
        (
            "feedback transform",
            sim::run_transform_coder(
                (&fb).into(),
                &k_x,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(15_000, 85),
            )
            .unwrap(),
            sim::run_transform_coder(
                (&fb).into(),
                &k_x,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(15_000, 85),
            )
            .unwrap(),
        ),
        (
            "noise shaper",
            sim::run_feedback_quantizer(
                &shaper,
                &ar_source,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(150_000, 86),
            )
            .unwrap(),
            sim::run_feedback_quantizer(
                &shaper,
                &ar_source,
                Channel::Lattice(LatticeKind::Z1),
                &SimConfig::new(150_000, 86),
            )
            .unwrap(),
        ),
        (
            "parallel bank",
            sim::run_parallel_bank(
                &white_shaper,
                &white,
                Channel::Lattice(LatticeKind::D4),
                &cfg_bank,
            )
            .unwrap(),
            sim::run_parallel_bank(
                &white_shaper,
                &white,
                Channel::Lattice(LatticeKind::D4),
                &cfg_bank,
            )
            .unwrap(),
        ),
    ];
    for (label, a, b) in &reruns {
        assert_deterministic(label, a, b, &mut c);
    }

    // The command-line front end must be byte-identical across reruns too.
    let bin = env!("CARGO_BIN_EXE_rdperp");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.json");
    std::fs::write(
        &config_path,
        r#"{
  "schema-version": 1,
  "source": {"type": "white", "variance": 1.0},
  "distortions": {"list": [0.25]},
  "architecture": "test-channel",
  "channel": "z1",
  "n-samples": 120000,
  "seed": 9
}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for out in ["run-a", "run-b"] {
        let out_dir = dir.path().join(out);
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "simulate run failed");
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    c.check(
        reports[0] == reports[1],
        "command-line reruns write byte-identical reports".to_string(),
    );

    c.finish(0.0);
}
