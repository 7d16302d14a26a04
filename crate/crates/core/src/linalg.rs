//! Dense solves for the small systems produced by Newton steps and the
//! identifiability machinery. Matrices are row-major `n × n` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Solves `A x = b` by LU decomposition with partial pivoting, in place.
/// Returns `None` when the matrix is numerically singular.
pub(crate) fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = math::abs(a[col * n + col]);
        for row in (col + 1)..n {
            let v = math::abs(a[row * n + col]);
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val <= f64::MIN_POSITIVE {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in (col + 1)..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for k in (col + 1)..n {
            x -= a[col * n + k] * b[k];
        }
        b[col] = x / a[col * n + col];
    }
    Some(())
}

/// Inverse of a row-major `n × n` matrix, or `None` if singular.
pub(crate) fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        solve(&mut m, &mut e, n)?;
        for row in 0..n {
            inv[row * n + col] = e[row];
        }
    }
    Some(inv)
}
