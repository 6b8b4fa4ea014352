//! One-class SVM with an RBF kernel, solved in the dual by pairwise (SMO)
//! updates with second-order working-set selection.
//!
//! Dual: minimize `½ αᵀKα` subject to `Σα = 1`, `0 ≤ αᵢ ≤ 1/(νn)`.
//! Decision value: `f(x) = Σ αᵢ k(xᵢ, x) − ρ`; points with `f(x) < 0` are
//! outliers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FeatureMatrix;

/// `exp(−γ‖x − z‖²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::Dimension { expected: x.len(), got: z.len() });
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    Ok(rbf(x, z, gamma))
}

fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    /// Training rows with nonzero dual coefficient.
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    /// Full dual vector over the training rows, in training order.
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// Fits the one-class dual on `m` (conventionally the majority class only).
///
/// Starts from the uniform feasible point `αᵢ = 1/n` and repeatedly moves
/// mass between the maximal violating pair until the KKT gap drops below
/// `tol`. The dual objective is non-increasing across updates.
pub fn fit_ocsvm(m: &FeatureMatrix, gamma: f64, nu: f64, tol: f64, max_iter: usize) -> Result<OcsvmModel> {
    let n = m.n_rows();
    if n < 2 {
        return Err(Error::invalid("one-class SVM needs at least 2 rows"));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid("nu must lie in (0, 1]"));
    }
    let upper = 1.0 / (nu * n as f64);
    let kernel: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| rbf(m.row(ij / n), m.row(ij % n), gamma))
        .collect();
    let k = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![1.0 / n as f64; n];
    // gradient of ½αᵀKα
    let mut grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k(i, j) * alpha[j]).sum())
        .collect();

    let at_upper = |a: f64| a >= upper - 1e-15 * upper;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: can grow (α < C) with the smallest gradient
        let mut i = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            if !at_upper(alpha[t]) && grad[t] < g_min {
                g_min = grad[t];
                i = t;
            }
        }
        // largest gradient among those that can shrink, for the stopping gap
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        if i == usize::MAX || g_max - g_min < tol {
            converged = true;
            break;
        }
        // j: second-order choice among shrinkable coordinates
        let mut j = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 {
                let b = grad[t] - g_min;
                if b > 0.0 {
                    let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let score = b * b / a;
                    if score > best {
                        best = score;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;
        let mut a = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if a <= 0.0 {
            a = TAU;
        }
        let mut delta = (grad[j] - grad[i]) / a;
        delta = delta.min(upper - alpha[i]).min(alpha[j]);
        if delta <= 0.0 {
            converged = true;
            break;
        }
        alpha[i] += delta;
        alpha[j] -= delta;
        if alpha[j] < 1e-18 {
            alpha[j] = 0.0;
        }
        for (t, g) in grad.iter_mut().enumerate() {
            *g += delta * (k(t, i) - k(t, j));
        }
    }

    // renormalize the few ulps of drift in Σα
    let total: f64 = alpha.iter().sum();
    for a in &mut alpha {
        *a /= total;
    }
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k(i, j) * alpha[j]).sum())
        .collect();
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();

    let free: Vec<usize> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && !at_upper(alpha[t]))
        .collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&t| grad[t]).sum::<f64>() / free.len() as f64
    } else {
        let lb = (0..n).filter(|&t| at_upper(alpha[t])).map(|t| grad[t]).fold(f64::NEG_INFINITY, f64::max);
        let ub = (0..n).filter(|&t| alpha[t] == 0.0).map(|t| grad[t]).fold(f64::INFINITY, f64::min);
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => 0.5 * (lb + ub),
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => 0.0,
        }
    };

    let (support_vectors, coefficients) = (0..n)
        .filter(|&t| alpha[t] > 0.0)
        .map(|t| (m.row(t).to_vec(), alpha[t]))
        .unzip();
    Ok(OcsvmModel {
        support_vectors,
        coefficients,
        rho,
        gamma,
        nu,
        alpha,
        objective,
        converged,
        iterations,
    })
}

impl OcsvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * rbf(sv, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    /// Risk score `−f(x)`: larger means more outlying.
    pub fn score(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if let Some(sv) = self.support_vectors.first() {
            m.check_width(sv.len())?;
        }
        Ok((0..m.n_rows()).into_par_iter().map(|i| -self.decision(m.row(i))).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "birthrisk-ocsvm v1\ngamma {}\nnu {}\nrho {}\nsupport_vectors {}\n",
            self.gamma,
            self.nu,
            self.rho,
            self.support_vectors.len()
        );
        for (sv, a) in self.support_vectors.iter().zip(&self.coefficients) {
            s.push_str(&a.to_string());
            for x in sv {
                s.push(' ');
                s.push_str(&x.to_string());
            }
            s.push('\n');
        }
        s
    }
}
