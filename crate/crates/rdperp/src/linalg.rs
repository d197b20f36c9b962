//! Triangular factorizations used by the coder designs.
//!
//! These are written out longhand rather than delegated to a library for two
//! reasons: failures must report *which* leading minor broke (the pivot index
//! is the actionable diagnostic for a bad covariance), and the feedback
//! design needs a unit-diagonal LDL factorization directly — deriving it from
//! a Cholesky factor by rescaling would smear the exact unit diagonal that
//! the construction relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L * L^T = a` and strictly
/// positive diagonal. Fails with the pivot index on non-positive-definite
/// input.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols(), "cholesky_lower requires a square matrix");
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot.is_finite() && pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = sum / root;
        }
    }
    Ok(l)
}

/// Unit-diagonal LDL factorization: returns `(l, d)` with `l` unit lower
/// triangular and `d` strictly positive such that `l * diag(d) * l^T = a`.
/// Fails with the pivot index on non-positive-definite input.
pub(crate) fn unit_ldl(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols(), "unit_ldl requires a square matrix");
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::zeros(n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)] * d[k];
        }
        if !(pivot.is_finite() && pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        d[j] = pivot;
        for i in (j + 1)..n {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = sum / pivot;
        }
    }
    Ok((l, d))
}

/// Inverse of a lower-triangular matrix with non-zero diagonal, by forward
/// substitution one column at a time.
pub(crate) fn lower_triangular_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    debug_assert_eq!(n, l.ncols(), "inverse requires a square matrix");
    for j in 0..n {
        if l[(j, j)] == 0.0 || !l[(j, j)].is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: l[(j, j)],
            });
        }
    }
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for i in (col + 1)..n {
            let mut sum = 0.0;
            for k in col..i {
                sum += l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = -sum / l[(i, i)];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn cholesky_matches_library_factorization() {
        let a = random_spd(6, 7);
        let ours = cholesky_lower(&a).unwrap();
        let theirs = nalgebra::Cholesky::new(a.clone()).expect("SPD input").l();
        assert_relative_eq!(ours, theirs, max_relative = 1e-12);
    }

    #[test]
    fn cholesky_reports_failing_pivot_index() {
        // Leading 1x1 and 2x2 minors are fine; the third breaks.
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[4.0, 2.0, 0.0, 2.0, 5.0, 0.0, 0.0, 0.0, -1.0],
        );
        match cholesky_lower(&a) {
            Err(Error::NotPositiveDefinite { pivot, value }) => {
                assert_eq!(pivot, 2, "third pivot is the first to fail");
                assert!(value < 0.0);
            }
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn unit_ldl_reconstructs_and_has_unit_diagonal() {
        let a = random_spd(5, 11);
        let (l, d) = unit_ldl(&a).unwrap();
        for i in 0..5 {
            assert_eq!(l[(i, i)], 1.0, "LDL factor must have an exactly unit diagonal");
            assert!(d[i] > 0.0, "LDL pivots must be positive");
            for j in (i + 1)..5 {
                assert_eq!(l[(i, j)], 0.0, "LDL factor must be lower triangular");
            }
        }
        let back = &l * DMatrix::from_diagonal(&d) * l.transpose();
        assert_relative_eq!(back, a, max_relative = 1e-12);
    }

    #[test]
    fn lower_inverse_round_trips() {
        let a = random_spd(6, 3);
        let l = cholesky_lower(&a).unwrap();
        let li = lower_triangular_inverse(&l).unwrap();
        let eye = &l * &li;
        assert_relative_eq!(eye, DMatrix::identity(6, 6), epsilon = 1e-12);
        // Inverse of a unit lower factor keeps the unit diagonal exactly.
        let (lu, _) = unit_ldl(&a).unwrap();
        let lui = lower_triangular_inverse(&lu).unwrap();
        for i in 0..6 {
            assert_eq!(lui[(i, i)], 1.0);
        }
    }

    proptest! {
        #[test]
        fn factorizations_agree_on_random_spd(seed in 0u64..500, n in 1usize..12) {
            let a = random_spd(n, seed);
            let l = cholesky_lower(&a).unwrap();
            let back = &l * l.transpose();
            prop_assert!((back - &a).norm() <= 1e-12 * a.norm());
            let (lu, d) = unit_ldl(&a).unwrap();
            let back = &lu * DMatrix::from_diagonal(&d) * lu.transpose();
            prop_assert!((back - &a).norm() <= 1e-12 * a.norm());
        }
    }
}
