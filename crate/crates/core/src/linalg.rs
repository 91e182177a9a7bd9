//! Dense symmetric positive-definite solves for small normal-equation systems.
//!
//! Everything here is a handful of columns wide (5 for the long-term tier,
//! the AR order for the real-time tier), so a plain Cholesky factorization
//! with an explicit 1-norm condition estimate is all that is needed.

use crate::error::{Error, Result};

/// Reject systems whose condition estimate exceeds this.
pub const MAX_CONDITION: f64 = 1e10;

/// Solves `A x = b` for symmetric positive-definite `A` (n×n, row-major).
///
/// Fails with an explicit singularity error naming the offending column when
/// a pivot collapses or the 1-norm condition estimate exceeds
/// [`MAX_CONDITION`]; there is no silent pseudo-inverse fallback.
pub(crate) fn solve_spd(
    a: &[f64],
    n: usize,
    b: &[f64],
    column_name: impl Fn(usize) -> String,
) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);

    let l = factor(a, n).map_err(|k| Error::SingularDesign {
        column: column_name(k),
        detail: "zero or negative pivot in Cholesky factorization".into(),
    })?;

    // Column whose pivot collapsed the most relative to its own diagonal is
    // the best culprit to report for ill-conditioned systems.
    let mut worst_ratio = f64::INFINITY;
    let mut worst_col = 0;
    for k in 0..n {
        let diag = a[k * n + k];
        let ratio = if diag > 0.0 {
            l[k * n + k] * l[k * n + k] / diag
        } else {
            0.0
        };
        if ratio < worst_ratio {
            worst_ratio = ratio;
            worst_col = k;
        }
    }

    let norm_a = one_norm(a, n);
    let mut norm_inv: f64 = 0.0;
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = solve_factored(&l, n, &e);
        norm_inv = norm_inv.max(col.iter().map(|v| v.abs()).sum());
        e[j] = 0.0;
    }
    let condition = norm_a * norm_inv;
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularDesign {
            column: column_name(worst_col),
            detail: format!("condition estimate {condition:.3e} exceeds {MAX_CONDITION:.0e}"),
        });
    }

    Ok(solve_factored(&l, n, b))
}

fn factor(a: &[f64], n: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; n * n];
    for k in 0..n {
        let mut d = a[k * n + k];
        for j in 0..k {
            d -= l[k * n + j] * l[k * n + j];
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(k);
        }
        l[k * n + k] = d.sqrt();
        for i in k + 1..n {
            let mut s = a[i * n + k];
            for j in 0..k {
                s -= l[i * n + j] * l[k * n + j];
            }
            l[i * n + k] = s / l[k * n + k];
        }
    }
    Ok(l)
}

fn solve_factored(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * y[j];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= l[j * n + i] * x[j];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

fn one_norm(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
