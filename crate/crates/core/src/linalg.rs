//! Small dense helpers for the closed-form solvers.

use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n × n`)
/// by Cholesky factorization.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Dimension { expected: n * n, got: a.len() });
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i} ({s})"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column means and population standard deviations of a row-major matrix.
pub fn column_moments(data: &[f64], n_rows: usize, n_cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; n_cols];
    for i in 0..n_rows {
        for j in 0..n_cols {
            mean[j] += data[i * n_cols + j];
        }
    }
    for m in &mut mean {
        *m /= n_rows.max(1) as f64;
    }
    let mut var = vec![0.0; n_cols];
    for i in 0..n_rows {
        for j in 0..n_cols {
            let d = data[i * n_cols + j] - mean[j];
            var[j] += d * d;
        }
    }
    let sd = var.iter().map(|v| (v / n_rows.max(1) as f64).sqrt()).collect();
    (mean, sd)
}
