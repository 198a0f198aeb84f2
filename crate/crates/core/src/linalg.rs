//! Dense Gaussian elimination for the small systems that policy evaluation
//! produces. Row-major storage throughout.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solves `a * x = b` in place with partial pivoting. `a` is `n x n`
/// row-major and is destroyed; the solution overwrites `b`.
pub(crate) fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = libm::fabs(a[col * n + col]);
        for row in col + 1..n {
            let v = libm::fabs(a[row * n + col]);
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if !(best > 1e-300) {
            return Err(Error::SingularSystem);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}

/// Solves `a^T * x = b`, leaving `a` untouched.
pub(crate) fn solve_transposed(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut at = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            at[j * n + i] = a[i * n + j];
        }
    }
    let mut x = b.to_vec();
    solve_in_place(&mut at, &mut x, n)?;
    Ok(x)
}
