//! Small numerical helpers shared across modules: monotone bisection and
//! deterministic seed derivation.

use crate::error::{Error, Result};

/// Maximum number of bisection steps. 200 halvings shrink any bracket far
/// below f64 resolution, so hitting this limit means the function is not
/// monotone or the bracket is bad.
const MAX_BISECT_ITERS: usize = 200;

/// Finds `x` in `[lo, hi]` with `f(x) = target` for a continuous increasing
/// `f`, stopping when `|f(x) - target| <= rel_tol * |target|`.
///
/// Returns `(x, f(x))` so callers can report the exactly-achieved value
/// instead of the requested one. The bracket must already straddle the
/// target; callers are responsible for bracket construction because the
/// natural expansion rule differs per quantity (water levels shrink towards
/// zero, noise parameters grow unboundedly).
pub(crate) fn bisect_increasing(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    rel_tol: f64,
    context: &'static str,
) -> Result<(f64, f64)> {
    debug_assert!(lo < hi, "bisection bracket must be ordered");
    let tol = rel_tol * target.abs();
    let f_lo = f(lo);
    let f_hi = f(hi);
    if (f_lo - target).abs() <= tol {
        return Ok((lo, f_lo));
    }
    if (f_hi - target).abs() <= tol {
        return Ok((hi, f_hi));
    }
    if f_lo > target || f_hi < target {
        return Err(Error::NoConvergence {
            context,
            iterations: 0,
        });
    }
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid - target).abs() <= tol {
            return Ok((mid, f_mid));
        }
        if f_mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
        // The bracket can collapse to adjacent floats before the value
        // tolerance is met on extremely flat stretches; accept the midpoint
        // only through the tolerance check above, and bail out when no
        // representable point remains strictly inside.
        if !(lo < mid || mid < hi) {
            break;
        }
    }
    Err(Error::NoConvergence {
        context,
        iterations: MAX_BISECT_ITERS,
    })
}

/// Derives an independent child seed from a base seed and a stream index.
///
/// Uses the splitmix64 finalizer, whose avalanche behaviour makes derived
/// seeds statistically independent even for consecutive indices. Used to give
/// every parallel branch / sweep point its own reproducible generator.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_solves_cubic_to_relative_tolerance() {
        let (x, fx) = bisect_increasing(|x| x * x * x, 0.0, 10.0, 8.0, 1e-12, "cubic")
            .expect("cubic bisection must converge");
        assert!((fx - 8.0).abs() <= 1e-12 * 8.0, "achieved value off: {fx}");
        assert!((x - 2.0).abs() < 1e-4, "root should be near 2, got {x}");
    }

    #[test]
    fn bisection_rejects_bracket_that_misses_target() {
        let err = bisect_increasing(|x| x, 0.0, 1.0, 5.0, 1e-9, "line")
            .expect_err("target outside bracket must fail");
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn bisection_accepts_target_on_bracket_edge() {
        let (x, _) = bisect_increasing(|x| x, 0.0, 5.0, 5.0, 1e-9, "line")
            .expect("target at upper edge must succeed");
        assert_eq!(x, 5.0);
    }

    #[test]
    fn derived_seeds_differ_across_indices_and_bases() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b, "consecutive indices must give different seeds");
        assert_ne!(a, c, "different bases must give different seeds");
        assert_eq!(a, derive_seed(42, 0), "derivation must be deterministic");
    }
}
