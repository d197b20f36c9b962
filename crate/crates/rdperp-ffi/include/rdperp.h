/* C interface to the rdperp rate-distortion library. Generated by cbindgen; do not edit. */

#ifndef RDPERP_H
#define RDPERP_H



#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this interface.
typedef enum RdpStatus {
  // The call succeeded and all out-parameters are valid.
  RDP_STATUS_OK = 0,
  // A required pointer argument was NULL.
  RDP_STATUS_NULL_POINTER = 1,
  // An argument failed validation; `rdp_last_error` names the constraint.
  RDP_STATUS_INVALID_INPUT = 2,
  // The requested distortion lies outside the feasible range of the curve.
  RDP_STATUS_OUT_OF_RANGE = 3,
  // A numerical procedure failed (factorization breakdown, no
  // convergence, a design that misses its tolerance).
  RDP_STATUS_NUMERICAL = 4,
  // An internal panic was caught at the boundary.
  RDP_STATUS_PANIC = 5,
} RdpStatus;

// Opaque power-spectrum handle (a sampled spectrum on a uniform grid over
// `[-pi, pi)`).
typedef struct RdpPsd RdpPsd;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; never NULL, never
// freed.
const char *rdp_version(void);

// Message for the most recent failing call on this thread, as a
// NUL-terminated string. Empty after a success. The pointer stays valid
// until the next `rdp_*` call on the same thread; do not free it.
const char *rdp_last_error(void);

// The universal space-filling penalty of scalar dithered quantization,
// `log2(2*pi*e/12)/2`, in bits per dimension.
double rdp_rate_loss_bound_bits(void);

// Creates a flat (white) spectrum of the given per-sample variance on a
// grid of `grid_size` points.
//
// On success writes a handle to `out`; release it with `rdp_psd_free`.
enum RdpStatus rdp_psd_flat(double variance, size_t grid_size, struct RdpPsd **out);

// Creates the spectrum of a stable autoregressive model with regression
// coefficients `coeffs[0..n_coeffs]` (lag 1 first) and the given innovation
// variance, sampled on `grid_size` points.
//
// On success writes a handle to `out`; release it with `rdp_psd_free`.
enum RdpStatus rdp_psd_ar(const double *coeffs,
                          size_t n_coeffs,
                          double innovation_variance,
                          size_t grid_size,
                          struct RdpPsd **out);

// Creates a spectrum from `len` samples over the canonical uniform grid on
// `[-pi, pi)`. The samples must be non-negative, even-symmetric in
// frequency, and `len` must be even.
//
// On success writes a handle to `out`; release it with `rdp_psd_free`.
enum RdpStatus rdp_psd_from_values(const double *values, size_t len, struct RdpPsd **out);

// Process variance of the spectrum (mean of the grid values). Returns NaN
// if `psd` is NULL.
double rdp_psd_variance(const struct RdpPsd *psd);

// Number of grid points in the spectrum. Returns 0 if `psd` is NULL.
size_t rdp_psd_grid_size(const struct RdpPsd *psd);

// Releases a spectrum handle. NULL is ignored.
void rdp_psd_free(struct RdpPsd *psd);

// Classical (water-filling) rate-distortion function of the source with
// spectrum `psd`, evaluated at the given per-sample distortion.
//
// Writes the rate in bits per sample to `rate_bits` and, when `water_level`
// is not NULL, the water level of the solution. The distortion must lie
// strictly between 0 and the variance; at or above the variance the curve
// has already reached zero and the call reports `RDP_STATUS_OUT_OF_RANGE`.
enum RdpStatus rdp_rate_classical(const struct RdpPsd *psd,
                                  double distortion,
                                  double *rate_bits,
                                  double *water_level);

// Rate-distortion function under the additional constraint that the
// reconstruction error is uncorrelated with the source, evaluated at the
// given per-sample distortion. Any positive distortion is feasible; unlike
// the classical curve, this one stays strictly positive at and above the
// source variance.
//
// Writes the rate in bits per sample to `rate_bits` and, when
// `noise_parameter` is not NULL, the noise parameter of the solution.
enum RdpStatus rdp_rate_uncorrelated(const struct RdpPsd *psd,
                                     double distortion,
                                     double *rate_bits,
                                     double *noise_parameter);

// Uncorrelated-error rate-distortion function of a finite Gaussian block
// with the given covariance, supplied row-major as `dim * dim` doubles.
// The distortion is per-dimension mean squared error.
//
// Writes the rate in bits per dimension to `rate_bits`.
enum RdpStatus rdp_rate_uncorrelated_vector(const double *covariance_row_major,
                                            size_t dim,
                                            double distortion,
                                            double *rate_bits);

// Synthesizes the FIR noise-shaping coder that realizes the
// uncorrelated-error optimum for the source spectrum `psd` at the given
// distortion, channel noise variance `sigma_w2`, and filter length
// `fir_len` (at least 8).
//
// On success writes the design as a JSON document to `out_json`; release
// the string with `rdp_string_free`.
enum RdpStatus rdp_design_noise_shaper_json(const struct RdpPsd *psd,
                                            double distortion,
                                            double sigma_w2,
                                            size_t fir_len,
                                            char **out_json);

// Designs the noise-shaping coder for the source spectrum `psd` (as
// `rdp_design_noise_shaper_json`) and runs it over a channel for
// `n_samples` time steps with the given seed.
//
// `channel` is one of `"wire"`, `"awgn"`, `"z1"`, `"z2"`, `"d4"`, `"e8"`.
// `n_parallel` is the number of coder branches feeding the quantizer; pass
// 0 for the natural choice (the lattice dimension, or 1 for wire and
// awgn). Runs are deterministic in all arguments.
//
// On success writes the measurement report as a JSON document to
// `out_json`; release the string with `rdp_string_free`.
enum RdpStatus rdp_simulate_noise_shaper_json(const struct RdpPsd *psd,
                                              double distortion,
                                              double sigma_w2,
                                              size_t fir_len,
                                              const char *channel,
                                              size_t n_samples,
                                              size_t n_parallel,
                                              uint64_t seed,
                                              char **out_json);

// Releases a string returned through a `char **` out-parameter. NULL is
// ignored.
void rdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDPERP_H */
