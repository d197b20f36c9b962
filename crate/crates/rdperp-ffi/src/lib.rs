//! C ABI over the rate-distortion library.
//!
//! Conventions, stated once and followed by every function:
//!
//! * Every fallible call returns an [`RdpStatus`]; results travel through
//!   out-pointers that are written only on `RDP_STATUS_OK`.
//! * Spectra are opaque [`RdpPsd`] handles created by the `rdp_psd_*`
//!   constructors and released with [`rdp_psd_free`].
//! * Strings returned through `char **` out-parameters are NUL-terminated,
//!   heap-allocated, and must be released with [`rdp_string_free`].
//! * After a failing call, [`rdp_last_error`] returns a message describing
//!   what went wrong on the current thread.
//! * Panics never unwind across the boundary; they surface as
//!   `RDP_STATUS_PANIC`.
//!
//! The committed header `include/rdperp.h` is generated from this file by
//! cbindgen; a test keeps the two in sync.

// Pointer contracts are the conventions above; per-function safety sections
// would only be copied into the C header, where they mean nothing.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use rdperp::coder::design_noise_shaper;
use rdperp::quantizer::LatticeKind;
use rdperp::rdf;
use rdperp::sim::{self, Channel, SimConfig, SourceSpec};
use rdperp::spectra::{ar_to_psd, ArModel, CovarianceMatrix, PsdGrid};
use rdperp::Error;

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdpStatus {
    /// The call succeeded and all out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument failed validation; `rdp_last_error` names the constraint.
    InvalidInput = 2,
    /// The requested distortion lies outside the feasible range of the curve.
    OutOfRange = 3,
    /// A numerical procedure failed (factorization breakdown, no
    /// convergence, a design that misses its tolerance).
    Numerical = 4,
    /// An internal panic was caught at the boundary.
    Panic = 5,
}

/// Opaque power-spectrum handle (a sampled spectrum on a uniform grid over
/// `[-pi, pi)`).
pub struct RdpPsd {
    inner: PsdGrid,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn ok() -> RdpStatus {
    set_last_error("");
    RdpStatus::Ok
}

fn fail(err: &Error) -> RdpStatus {
    set_last_error(&err.to_string());
    match err {
        Error::DistortionOutOfRange { .. } => RdpStatus::OutOfRange,
        e if e.is_input_error() => RdpStatus::InvalidInput,
        _ => RdpStatus::Numerical,
    }
}

fn fail_null(what: &str) -> RdpStatus {
    set_last_error(&format!("{what} must not be NULL"));
    RdpStatus::NullPointer
}

fn fail_invalid(message: &str) -> RdpStatus {
    set_last_error(message);
    RdpStatus::InvalidInput
}

/// Runs a body with panics converted to `RDP_STATUS_PANIC`.
fn guarded(body: impl FnOnce() -> RdpStatus) -> RdpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic caught at the C boundary");
            RdpStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn write_handle(out: *mut *mut RdpPsd, psd: PsdGrid) -> RdpStatus {
    *out = Box::into_raw(Box::new(RdpPsd { inner: psd }));
    ok()
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> RdpStatus {
    match CString::new(text) {
        Ok(s) => {
            *out = s.into_raw();
            ok()
        }
        Err(_) => fail_invalid("result contained an interior NUL byte"),
    }
}

/// Library version as a static NUL-terminated string; never NULL, never
/// freed.
#[no_mangle]
pub extern "C" fn rdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failing call on this thread, as a
/// NUL-terminated string. Empty after a success. The pointer stays valid
/// until the next `rdp_*` call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn rdp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// The universal space-filling penalty of scalar dithered quantization,
/// `log2(2*pi*e/12)/2`, in bits per dimension.
#[no_mangle]
pub extern "C" fn rdp_rate_loss_bound_bits() -> f64 {
    sim::rate_loss_bound_bits()
}

/// Creates a flat (white) spectrum of the given per-sample variance on a
/// grid of `grid_size` points.
///
/// On success writes a handle to `out`; release it with `rdp_psd_free`.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_flat(
    variance: f64,
    grid_size: usize,
    out: *mut *mut RdpPsd,
) -> RdpStatus {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        match PsdGrid::flat(variance, grid_size) {
            Ok(psd) => write_handle(out, psd),
            Err(e) => fail(&e),
        }
    })
}

/// Creates the spectrum of a stable autoregressive model with regression
/// coefficients `coeffs[0..n_coeffs]` (lag 1 first) and the given innovation
/// variance, sampled on `grid_size` points.
///
/// On success writes a handle to `out`; release it with `rdp_psd_free`.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_ar(
    coeffs: *const f64,
    n_coeffs: usize,
    innovation_variance: f64,
    grid_size: usize,
    out: *mut *mut RdpPsd,
) -> RdpStatus {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let Some(coeffs) = slice_arg(coeffs, n_coeffs) else {
            return fail_null("coeffs");
        };
        let model = match ArModel::new(coeffs.to_vec(), innovation_variance) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        match ar_to_psd(&model, grid_size) {
            Ok(psd) => write_handle(out, psd),
            Err(e) => fail(&e),
        }
    })
}

/// Creates a spectrum from `len` samples over the canonical uniform grid on
/// `[-pi, pi)`. The samples must be non-negative, even-symmetric in
/// frequency, and `len` must be even.
///
/// On success writes a handle to `out`; release it with `rdp_psd_free`.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_from_values(
    values: *const f64,
    len: usize,
    out: *mut *mut RdpPsd,
) -> RdpStatus {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let Some(values) = slice_arg(values, len) else {
            return fail_null("values");
        };
        match PsdGrid::new(values.to_vec()) {
            Ok(psd) => write_handle(out, psd),
            Err(e) => fail(&e),
        }
    })
}

/// Process variance of the spectrum (mean of the grid values). Returns NaN
/// if `psd` is NULL.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_variance(psd: *const RdpPsd) -> f64 {
    if psd.is_null() {
        return f64::NAN;
    }
    (*psd).inner.variance()
}

/// Number of grid points in the spectrum. Returns 0 if `psd` is NULL.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_grid_size(psd: *const RdpPsd) -> usize {
    if psd.is_null() {
        return 0;
    }
    (*psd).inner.grid_size()
}

/// Releases a spectrum handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rdp_psd_free(psd: *mut RdpPsd) {
    if !psd.is_null() {
        drop(Box::from_raw(psd));
    }
}

/// Classical (water-filling) rate-distortion function of the source with
/// spectrum `psd`, evaluated at the given per-sample distortion.
///
/// Writes the rate in bits per sample to `rate_bits` and, when `water_level`
/// is not NULL, the water level of the solution. The distortion must lie
/// strictly between 0 and the variance; at or above the variance the curve
/// has already reached zero and the call reports `RDP_STATUS_OUT_OF_RANGE`.
#[no_mangle]
pub unsafe extern "C" fn rdp_rate_classical(
    psd: *const RdpPsd,
    distortion: f64,
    rate_bits: *mut f64,
    water_level: *mut f64,
) -> RdpStatus {
    guarded(|| {
        if psd.is_null() {
            return fail_null("psd");
        }
        if rate_bits.is_null() {
            return fail_null("rate_bits");
        }
        match rdf::shannon_at_distortion(&(*psd).inner, distortion) {
            Ok((point, _)) => {
                *rate_bits = point.rate_bits;
                if !water_level.is_null() {
                    *water_level = point.parameter;
                }
                ok()
            }
            Err(e) => fail(&e),
        }
    })
}

/// Rate-distortion function under the additional constraint that the
/// reconstruction error is uncorrelated with the source, evaluated at the
/// given per-sample distortion. Any positive distortion is feasible; unlike
/// the classical curve, this one stays strictly positive at and above the
/// source variance.
///
/// Writes the rate in bits per sample to `rate_bits` and, when
/// `noise_parameter` is not NULL, the noise parameter of the solution.
#[no_mangle]
pub unsafe extern "C" fn rdp_rate_uncorrelated(
    psd: *const RdpPsd,
    distortion: f64,
    rate_bits: *mut f64,
    noise_parameter: *mut f64,
) -> RdpStatus {
    guarded(|| {
        if psd.is_null() {
            return fail_null("psd");
        }
        if rate_bits.is_null() {
            return fail_null("rate_bits");
        }
        match rdf::uncorr_at_distortion(&(*psd).inner, distortion) {
            Ok((point, _)) => {
                *rate_bits = point.rate_bits;
                if !noise_parameter.is_null() {
                    *noise_parameter = point.parameter;
                }
                ok()
            }
            Err(e) => fail(&e),
        }
    })
}

/// Uncorrelated-error rate-distortion function of a finite Gaussian block
/// with the given covariance, supplied row-major as `dim * dim` doubles.
/// The distortion is per-dimension mean squared error.
///
/// Writes the rate in bits per dimension to `rate_bits`.
#[no_mangle]
pub unsafe extern "C" fn rdp_rate_uncorrelated_vector(
    covariance_row_major: *const f64,
    dim: usize,
    distortion: f64,
    rate_bits: *mut f64,
) -> RdpStatus {
    guarded(|| {
        if rate_bits.is_null() {
            return fail_null("rate_bits");
        }
        let Some(data) = slice_arg(covariance_row_major, dim.saturating_mul(dim))
        else {
            return fail_null("covariance_row_major");
        };
        if dim == 0 {
            return fail_invalid("covariance dimension must be at least 1");
        }
        let k_x = match CovarianceMatrix::new(DMatrix::from_row_slice(dim, dim, data))
        {
            Ok(k) => k,
            Err(e) => return fail(&e),
        };
        match rdf::vector_uncorr_rdf(&k_x, distortion) {
            Ok((point, _)) => {
                *rate_bits = point.rate_bits;
                ok()
            }
            Err(e) => fail(&e),
        }
    })
}

/// Synthesizes the FIR noise-shaping coder that realizes the
/// uncorrelated-error optimum for the source spectrum `psd` at the given
/// distortion, channel noise variance `sigma_w2`, and filter length
/// `fir_len` (at least 8).
///
/// On success writes the design as a JSON document to `out_json`; release
/// the string with `rdp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rdp_design_noise_shaper_json(
    psd: *const RdpPsd,
    distortion: f64,
    sigma_w2: f64,
    fir_len: usize,
    out_json: *mut *mut c_char,
) -> RdpStatus {
    guarded(|| {
        if psd.is_null() {
            return fail_null("psd");
        }
        if out_json.is_null() {
            return fail_null("out_json");
        }
        let design = match design_noise_shaper(&(*psd).inner, distortion, sigma_w2, fir_len)
        {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        match serde_json::to_string_pretty(&design) {
            Ok(text) => write_string(out_json, text),
            Err(e) => fail(&Error::from(e)),
        }
    })
}

fn parse_channel(name: &str) -> Option<Channel> {
    Some(match name {
        "wire" => Channel::Wire,
        "awgn" => Channel::Awgn,
        "z1" => Channel::Lattice(LatticeKind::Z1),
        "z2" => Channel::Lattice(LatticeKind::Z2),
        "d4" => Channel::Lattice(LatticeKind::D4),
        "e8" => Channel::Lattice(LatticeKind::E8),
        _ => return None,
    })
}

/// Designs the noise-shaping coder for the source spectrum `psd` (as
/// `rdp_design_noise_shaper_json`) and runs it over a channel for
/// `n_samples` time steps with the given seed.
///
/// `channel` is one of `"wire"`, `"awgn"`, `"z1"`, `"z2"`, `"d4"`, `"e8"`.
/// `n_parallel` is the number of coder branches feeding the quantizer; pass
/// 0 for the natural choice (the lattice dimension, or 1 for wire and
/// awgn). Runs are deterministic in all arguments.
///
/// On success writes the measurement report as a JSON document to
/// `out_json`; release the string with `rdp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rdp_simulate_noise_shaper_json(
    psd: *const RdpPsd,
    distortion: f64,
    sigma_w2: f64,
    fir_len: usize,
    channel: *const c_char,
    n_samples: usize,
    n_parallel: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> RdpStatus {
    guarded(|| {
        if psd.is_null() {
            return fail_null("psd");
        }
        if channel.is_null() {
            return fail_null("channel");
        }
        if out_json.is_null() {
            return fail_null("out_json");
        }
        let channel_name = match CStr::from_ptr(channel).to_str() {
            Ok(s) => s,
            Err(_) => return fail_invalid("channel name is not valid UTF-8"),
        };
        let Some(channel) = parse_channel(channel_name) else {
            return fail_invalid(&format!(
                "unknown channel '{channel_name}' (expected wire, awgn, z1, z2, \
                 d4, or e8)"
            ));
        };
        let design = match design_noise_shaper(&(*psd).inner, distortion, sigma_w2, fir_len)
        {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        let source = SourceSpec::Psd {
            psd: (*psd).inner.clone(),
        };
        let mut config = SimConfig::new(n_samples, seed);
        config.n_parallel = match (n_parallel, channel) {
            (0, Channel::Lattice(kind)) => kind.dim(),
            (0, _) => 1,
            (n, _) => n,
        };
        let run = if config.n_parallel == 1 {
            sim::run_feedback_quantizer(&design, &source, channel, &config)
        } else {
            sim::run_parallel_bank(&design, &source, channel, &config)
        };
        match run {
            Ok(run) => match serde_json::to_string_pretty(&run.report) {
                Ok(text) => write_string(out_json, text),
                Err(e) => fail(&Error::from(e)),
            },
            Err(e) => fail(&e),
        }
    })
}

/// Releases a string returned through a `char **` out-parameter. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
