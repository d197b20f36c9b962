//! Command-line front end: argument parsing, config loading, exit codes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 measured rate loss violated its bound.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "rdperp",
    version,
    about = "Rate-distortion designs with source-uncorrelated error, \
             validated by dithered-quantizer Monte-Carlo runs",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the classical and uncorrelated-error rate-distortion curves.
    #[command(long_about = "Tabulate the classical and uncorrelated-error \
rate-distortion curves over the configured distortion targets.

Writes rdf.csv with columns:
  distortion          target mean squared error per dimension
  rate_shannon_bits   classical rate (clamped to 0 at or above the variance)
  rate_uncorr_bits    rate with error uncorrelated from the source
  theta               water level of the classical solution (empty when the
                      classical rate is 0)
  alpha               parameter of the uncorrelated-error solution

Rows are sorted by distortion. Needs a spectral source (white, ar, or
psd-file).")]
    Rdf(CommonArgs),
    /// Synthesize a coder design and report its invariant residuals.
    #[command(long_about = "Synthesize the configured coder design at one \
distortion target.

Writes design.json (machine-readable, reusable via design-file) and
design-summary.txt (the residuals of every invariant the construction must
satisfy). Requires architecture (transform | feedback-transform |
noise-shaper) and exactly one distortion target.")]
    Design(CommonArgs),
    /// Run one Monte-Carlo experiment and write its report.
    #[command(long_about = "Run one Monte-Carlo experiment: the configured \
architecture and channel at one distortion target.

Writes report.json (all measurements and diagnostics) and summary.csv with
columns:
  architecture, channel, distortion, design_rate_bits, empirical_rate_bits,
  rate_std_error, rate_loss_bits, rate_loss_bound_bits, bound_ok
Empty cells mean 'not applicable' (a wire carries no rate). When the channel
quantizes, indices.csv holds one row of lattice indices (i0,..,i{n-1}) per
channel use. With estimate-spectra on, source-psd.csv, error-psd.csv, and
channel-output-psd.csv hold Welch estimates as (omega, psd) rows.

The test-channel architecture feeds the source straight through the channel
and uses the distortion target as the channel noise variance.

Exits 4 when the measured rate loss exceeds the universal dithered-quantizer
bound plus two standard errors.")]
    Simulate(CommonArgs),
    /// Compare rate loss across lattice dimensions.
    #[command(long_about = "Compare the measured rate loss of dithered \
lattice quantizers of increasing dimension (default z1, d4, e8) on the same \
noise-shaper design, over the configured distortion targets.

Writes sweep.csv with columns:
  lattice, dim, distortion, design_rate_bits, empirical_rate_bits,
  rate_std_error, rate_loss_bits, rate_loss_bound_bits, bound_ok
plus one report-d<i>-<lattice>.json per point. Points fan out to parallel
workers with independently derived seeds; rows are ordered by distortion,
then by the configured lattice order. Exits 4 when any point violates the
rate-loss bound.")]
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the seed from the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the frequency-grid size from the config.
    #[arg(long, value_name = "G")]
    grid: Option<usize>,
    /// Override the sample budget from the config.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
}

fn load_with_overrides(args: &CommonArgs) -> rdperp::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(grid) = args.grid {
        config.grid_size = Some(grid);
    }
    if let Some(samples) = args.samples {
        config.n_samples = samples;
    }
    Ok(config)
}

fn fail(error: &rdperp::Error) -> i32 {
    eprintln!("error: {error}");
    if error.is_input_error() {
        2
    } else {
        3
    }
}

/// Parses arguments, runs the chosen subcommand, and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let (args, command): (&CommonArgs, fn(&ExperimentConfig) -> rdperp::Result<Outcome>) =
        match &cli.command {
            Command::Rdf(args) => (args, commands::cmd_rdf),
            Command::Design(args) => (args, commands::cmd_design),
            Command::Simulate(args) => (args, commands::cmd_simulate),
            Command::Sweep(args) => (args, commands::cmd_sweep),
        };
    let config = match load_with_overrides(args) {
        Ok(config) => config,
        Err(error) => return fail(&error),
    };
    match command(&config) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::BoundViolated) => {
            eprintln!("error: measured rate loss violates the bound");
            4
        }
        Err(error) => fail(&error),
    }
}
