//! Subcommand implementations: each takes a validated configuration, writes
//! its result files into the output directory, and reports whether any
//! measured rate loss violated its bound (which maps to exit code 4).

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::iter::{IntoParallelRefIterator, ParallelIterator};

use rdperp::coder::{
    design_causal_transform, design_feedback_transform, design_noise_shaper,
    max_root_radius, FeedbackTransformDesign, NoiseShaperDesign, TransformDesign,
};
use rdperp::quantizer::{write_indices_csv, LatticeKind};
use rdperp::rdf::{shannon_at_distortion, uncorr_at_distortion};
use rdperp::sim::{
    derive_seed, run_feedback_quantizer, run_parallel_bank, run_test_channel,
    run_transform_coder, BlockDesign, Channel, SimConfig, SimReport, SimRun,
};
use rdperp::spectra::{CovarianceMatrix, PsdGrid};
use rdperp::{Error, Result};

use super::config::{Architecture, ExperimentConfig};

/// What a command concluded beyond plain success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Everything within bounds.
    Ok,
    /// At least one measured rate loss exceeded its bound; exit code 4.
    BoundViolated,
}

/// Relative slack allowed between a requested distortion target and the
/// value a solver reports back before the CLI refuses to emit the row.
const REVALIDATE_REL_TOL: f64 = 1e-6;

fn ensure_out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = config.out_dir();
    fs::create_dir_all(&dir).map_err(|e| {
        Error::invalid(format!("cannot create out dir {}: {e}", dir.display()))
    })?;
    Ok(dir)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn required_architecture(config: &ExperimentConfig) -> Result<Architecture> {
    config.architecture.ok_or_else(|| {
        Error::invalid(
            "architecture is required (test-channel | transform | \
             feedback-transform | noise-shaper)",
        )
    })
}

fn single_distortion(config: &ExperimentConfig, command: &str) -> Result<f64> {
    let targets = config.distortions.expand()?;
    if targets.len() != 1 {
        return Err(Error::invalid(format!(
            "{command} takes exactly one distortion target, got {}; \
             use sweep for ranges",
            targets.len()
        )));
    }
    Ok(targets[0])
}

/// Cheap re-validation before a rate/distortion pair is written out.
fn recheck_point(rate_bits: f64, achieved: f64, requested: f64) -> Result<()> {
    let deviation = (achieved - requested).abs() / requested;
    if !rate_bits.is_finite() || rate_bits < 0.0 || deviation > REVALIDATE_REL_TOL {
        return Err(Error::DesignCheckFailed {
            context: "rate-distortion tabulation",
            residual: deviation,
            tolerance: REVALIDATE_REL_TOL,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// rdf
// ---------------------------------------------------------------------------

/// Tabulates the classical and uncorrelated-error rate-distortion curves.
pub fn cmd_rdf(config: &ExperimentConfig) -> Result<Outcome> {
    let (psd, _) = config.spectral_source(config.design_grid())?;
    let variance = psd.variance();
    let targets = config.distortions.expand()?;
    let out = ensure_out_dir(config)?;

    let mut csv =
        String::from("distortion,rate_shannon_bits,rate_uncorr_bits,theta,alpha\n");
    for &d in &targets {
        let (perp, _) = uncorr_at_distortion(&psd, d)?;
        recheck_point(perp.rate_bits, perp.distortion, d)?;
        let (shannon_bits, theta) = if d < variance {
            let (point, _) = shannon_at_distortion(&psd, d)?;
            recheck_point(point.rate_bits, point.distortion, d)?;
            (point.rate_bits, Some(point.parameter))
        } else {
            // At or above the source variance the classical rate is zero
            // and the water level is undefined; the column stays empty.
            (0.0, None)
        };
        let theta_cell = theta.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{d},{shannon_bits},{},{theta_cell},{}",
            perp.rate_bits, perp.parameter
        )
        .expect("string writes cannot fail");
    }

    let path = out.join("rdf.csv");
    write_file(&path, &csv)?;
    println!(
        "wrote {} ({} rows, source variance {variance})",
        path.display(),
        targets.len()
    );
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

fn transform_summary(design: &TransformDesign) -> Result<String> {
    Ok(format!(
        "causal-transform design\n\
         dim                    : {}\n\
         rate (bits/dim)        : {:.12}\n\
         distortion             : {:.12}\n\
         alpha                  : {:.12}\n\
         channel noise variance : {}\n\
         factorization residual : {:.3e} (tolerance 1e-9, relative)\n",
        design.dim(),
        design.rate_bits(),
        design.distortion(),
        design.alpha(),
        design.sigma_w2(),
        design.factorization_residual()?,
    ))
}

fn feedback_summary(
    design: &FeedbackTransformDesign,
    k_x: &CovarianceMatrix,
) -> Result<String> {
    let variances = design.channel_variances();
    Ok(format!(
        "feedback-transform design\n\
         dim                    : {}\n\
         rate (bits/dim)        : {:.12}\n\
         distortion             : {:.12}\n\
         alpha                  : {:.12}\n\
         channel noise variance : {}\n\
         channel variances      : {:.6} .. {:.6}\n\
         feedback residual      : {:.3e} (tolerance 1e-9, relative)\n\
         whitening residual     : {:.3e} (off-diagonal mass, relative)\n",
        design.dim(),
        design.rate_bits(),
        design.distortion(),
        design.alpha(),
        design.sigma_w2(),
        variances.min(),
        variances.max(),
        design.feedback_residual(),
        design.whitening_residual(k_x)?,
    ))
}

fn shaper_summary(design: &NoiseShaperDesign, source_psd: &PsdGrid) -> Result<String> {
    let radius = |taps: &[f64]| max_root_radius(taps).unwrap_or(0.0);
    Ok(format!(
        "noise-shaper design\n\
         fir taps               : {}\n\
         rate (bits/sample)     : {:.12}\n\
         distortion             : {:.12}\n\
         alpha                  : {:.12}\n\
         channel noise variance : {}\n\
         channel output variance: {:.12}\n\
         bode residual          : {:.3e} (tolerance 1e-3, natural log)\n\
         whiteness rms          : {:.3e} (relative)\n\
         shaping rms            : {:.3e} (relative)\n\
         max root radius        : pre {:.9}, reconstruction {:.9}, loop {:.9}\n",
        design.fir_len(),
        design.rate_bits(),
        design.distortion(),
        design.alpha(),
        design.sigma_w2(),
        design.sigma_u2(),
        design.bode_residual(),
        design.whiteness_residual(source_psd)?,
        design.shaping_residual(),
        radius(design.pre_filter()),
        radius(design.reconstruction_filter()),
        radius(&design.one_minus_f()),
    ))
}

/// Synthesizes the configured design and writes it with a residual summary.
pub fn cmd_design(config: &ExperimentConfig) -> Result<Outcome> {
    let arch = required_architecture(config)?;
    let d = single_distortion(config, "design")?;
    let out = ensure_out_dir(config)?;

    let (json, summary) = match arch {
        Architecture::Transform => {
            let k_x = config.block_covariance(config.block_size, config.design_grid())?;
            let design = design_causal_transform(&k_x, d, config.sigma_w2)?;
            (serde_json::to_string_pretty(&design)?, transform_summary(&design)?)
        }
        Architecture::FeedbackTransform => {
            let k_x = config.block_covariance(config.block_size, config.design_grid())?;
            let design = design_feedback_transform(&k_x, d, config.sigma_w2)?;
            (
                serde_json::to_string_pretty(&design)?,
                feedback_summary(&design, &k_x)?,
            )
        }
        Architecture::NoiseShaper => {
            let (psd, _) = config.spectral_source(config.design_grid())?;
            let design = design_noise_shaper(&psd, d, config.sigma_w2, config.fir_len)?;
            (serde_json::to_string_pretty(&design)?, shaper_summary(&design, &psd)?)
        }
        Architecture::TestChannel => {
            return Err(Error::invalid(
                "test-channel has no design to synthesize; pick transform, \
                 feedback-transform, or noise-shaper",
            ));
        }
    };

    let design_path = out.join("design.json");
    write_file(&design_path, &(json + "\n"))?;
    let summary_path = out.join("design-summary.txt");
    write_file(&summary_path, &summary)?;
    print!("{summary}");
    println!("wrote {} and {}", design_path.display(), summary_path.display());
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn load_design<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::invalid(format!("cannot read design {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("design {}: {e}", path.display())))
}

fn resolve_n_parallel(
    config: &ExperimentConfig,
    arch: Architecture,
    channel: Channel,
) -> usize {
    if let Some(n) = config.n_parallel {
        return n;
    }
    match (arch, channel) {
        (Architecture::NoiseShaper | Architecture::TestChannel, Channel::Lattice(kind)) => {
            kind.dim()
        }
        _ => 1,
    }
}

fn optional_cell<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

const SUMMARY_HEADER: &str = "architecture,channel,distortion,design_rate_bits,\
                              empirical_rate_bits,rate_std_error,rate_loss_bits,\
                              rate_loss_bound_bits,bound_ok\n";

fn summary_row(report: &SimReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        report.architecture,
        report.channel,
        report.design_distortion,
        report.design_rate_bits,
        optional_cell(report.empirical_rate_bits),
        optional_cell(report.rate_std_error),
        optional_cell(report.rate_loss_bits),
        report.rate_loss_bound_bits,
        optional_cell(report.bound_satisfied),
    )
}

fn human_line(report: &SimReport) -> String {
    match (report.empirical_rate_bits, report.rate_loss_bits) {
        (Some(rate), Some(loss)) => {
            let verdict = match report.bound_satisfied {
                Some(true) => "ok",
                Some(false) => "VIOLATED",
                None => "-",
            };
            format!(
                "{} over {}: distortion {:.6}, rate {:.4} bits/dim \
                 (design {:.4}), loss {:.4} vs bound {:.4}: {}",
                report.architecture,
                report.channel,
                report.empirical_distortion,
                rate,
                report.design_rate_bits,
                loss,
                report.rate_loss_bound_bits,
                verdict
            )
        }
        _ => format!(
            "{} over {}: distortion {:.6}, max reconstruction error {:.3e}",
            report.architecture,
            report.channel,
            report.empirical_distortion,
            report
                .diagnostics
                .get("pr_max_abs_error")
                .copied()
                .unwrap_or(f64::NAN)
        ),
    }
}

fn write_run_outputs(out: &Path, run: &SimRun, design_json: Option<&str>) -> Result<()> {
    let report_path = out.join("report.json");
    write_file(
        &report_path,
        &(serde_json::to_string_pretty(&run.report)? + "\n"),
    )?;
    write_file(
        &out.join("summary.csv"),
        &(SUMMARY_HEADER.to_string() + &summary_row(&run.report)),
    )?;
    if let Some(json) = design_json {
        write_file(&out.join("design.json"), &(json.to_string() + "\n"))?;
    }
    if let Some(stream) = &run.quantized {
        let mut buf: Vec<u8> = Vec::new();
        write_indices_csv(&mut buf, stream.dim, &stream.indices)?;
        let text = String::from_utf8(buf).expect("index CSV is ASCII");
        write_file(&out.join("indices.csv"), &text)?;
    }
    if let Some(spectra) = &run.report.spectra {
        for (name, psd) in [
            ("source-psd.csv", &spectra.source_psd),
            ("error-psd.csv", &spectra.error_psd),
            ("channel-output-psd.csv", &spectra.channel_output_psd),
        ] {
            let mut buf: Vec<u8> = Vec::new();
            psd.to_csv(&mut buf)?;
            let text = String::from_utf8(buf).expect("PSD CSV is ASCII");
            write_file(&out.join(name), &text)?;
        }
    }
    Ok(())
}

fn report_outcome(report: &SimReport) -> Outcome {
    if report.bound_satisfied == Some(false) {
        Outcome::BoundViolated
    } else {
        Outcome::Ok
    }
}

/// Runs one Monte-Carlo experiment and writes report, summary, and streams.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Outcome> {
    let arch = required_architecture(config)?;
    let channel = config
        .channel
        .ok_or_else(|| {
            Error::invalid("simulate needs a channel (wire | awgn | z1 | z2 | d4 | e8)")
        })?
        .to_channel();
    let d = single_distortion(config, "simulate")?;
    let out = ensure_out_dir(config)?;

    let sim = SimConfig {
        n_samples: config.n_samples,
        n_parallel: resolve_n_parallel(config, arch, channel),
        seed: config.seed,
        burn_in: config.burn_in,
        grid_size: config.welch_grid(),
        estimate_spectra: config.estimate_spectra,
    };
    let design_file = config.design_file.as_ref().map(|p| config.resolve(p));

    let (run, design_json) = match arch {
        Architecture::Transform => {
            let k_x = config.block_covariance(config.block_size, config.design_grid())?;
            let design: TransformDesign = match &design_file {
                Some(path) => load_design(path)?,
                None => design_causal_transform(&k_x, d, config.sigma_w2)?,
            };
            let json = serde_json::to_string_pretty(&design)?;
            let run =
                run_transform_coder(BlockDesign::Plain(&design), &k_x, channel, &sim)?;
            (run, Some(json))
        }
        Architecture::FeedbackTransform => {
            let k_x = config.block_covariance(config.block_size, config.design_grid())?;
            let design: FeedbackTransformDesign = match &design_file {
                Some(path) => load_design(path)?,
                None => design_feedback_transform(&k_x, d, config.sigma_w2)?,
            };
            let json = serde_json::to_string_pretty(&design)?;
            let run =
                run_transform_coder(BlockDesign::Feedback(&design), &k_x, channel, &sim)?;
            (run, Some(json))
        }
        Architecture::NoiseShaper => {
            let (psd, source) = config.spectral_source(config.design_grid())?;
            let design: NoiseShaperDesign = match &design_file {
                Some(path) => load_design(path)?,
                None => design_noise_shaper(&psd, d, config.sigma_w2, config.fir_len)?,
            };
            let json = serde_json::to_string_pretty(&design)?;
            let run = if sim.n_parallel == 1 {
                run_feedback_quantizer(&design, &source, channel, &sim)?
            } else {
                run_parallel_bank(&design, &source, channel, &sim)?
            };
            (run, Some(json))
        }
        Architecture::TestChannel => {
            let (_, source) = config.spectral_source(config.design_grid())?;
            let run = run_test_channel(&source, channel, d, &sim)?;
            (run, None)
        }
    };

    write_run_outputs(&out, &run, design_json.as_deref())?;
    println!("{}", human_line(&run.report));
    println!("wrote {}", out.display());
    for warning in &run.report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(report_outcome(&run.report))
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

const SWEEP_HEADER: &str = "lattice,dim,distortion,design_rate_bits,\
                            empirical_rate_bits,rate_std_error,rate_loss_bits,\
                            rate_loss_bound_bits,bound_ok\n";

/// Compares rate loss across lattice dimensions over the distortion range.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Outcome> {
    let arch = config.architecture.unwrap_or(Architecture::NoiseShaper);
    if !matches!(
        arch,
        Architecture::NoiseShaper | Architecture::TestChannel
    ) {
        return Err(Error::invalid(
            "sweep compares lattices on the stream architectures \
             (noise-shaper or test-channel)",
        ));
    }
    let lattices = config
        .lattices
        .clone()
        .unwrap_or_else(|| vec![LatticeKind::Z1, LatticeKind::D4, LatticeKind::E8]);
    let targets = config.distortions.expand()?;
    let (psd, source) = config.spectral_source(config.design_grid())?;
    let out = ensure_out_dir(config)?;

    // One design per distortion, shared by all lattice runs at that target.
    let designs: Vec<Option<NoiseShaperDesign>> = match arch {
        Architecture::NoiseShaper => targets
            .iter()
            .map(|&d| design_noise_shaper(&psd, d, config.sigma_w2, config.fir_len).map(Some))
            .collect::<Result<_>>()?,
        _ => targets.iter().map(|_| None).collect(),
    };

    let points: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|di| (0..lattices.len()).map(move |li| (di, li)))
        .collect();
    let runs: Vec<SimRun> = points
        .par_iter()
        .map(|&(di, li)| -> Result<SimRun> {
            let lattice = lattices[li];
            let channel = Channel::Lattice(lattice);
            let sim = SimConfig {
                n_samples: config.n_samples,
                n_parallel: lattice.dim(),
                seed: derive_seed(config.seed, (di * lattices.len() + li) as u64),
                burn_in: config.burn_in,
                grid_size: config.welch_grid(),
                estimate_spectra: config.estimate_spectra,
            };
            match &designs[di] {
                Some(design) => run_parallel_bank(design, &source, channel, &sim),
                None => run_test_channel(&source, channel, targets[di], &sim),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from(SWEEP_HEADER);
    let mut violated = false;
    for (&(di, li), run) in points.iter().zip(&runs) {
        let lattice = lattices[li];
        let report = &run.report;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            lattice,
            lattice.dim(),
            report.design_distortion,
            report.design_rate_bits,
            optional_cell(report.empirical_rate_bits),
            optional_cell(report.rate_std_error),
            optional_cell(report.rate_loss_bits),
            report.rate_loss_bound_bits,
            optional_cell(report.bound_satisfied),
        )
        .expect("string writes cannot fail");
        let report_path = out.join(format!("report-d{di}-{lattice}.json"));
        write_file(
            &report_path,
            &(serde_json::to_string_pretty(report)? + "\n"),
        )?;
        println!("{}", human_line(report));
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        violated |= report.bound_satisfied == Some(false);
    }
    let path = out.join("sweep.csv");
    write_file(&path, &csv)?;
    println!("wrote {} ({} points)", path.display(), points.len());
    Ok(if violated {
        Outcome::BoundViolated
    } else {
        Outcome::Ok
    })
}
