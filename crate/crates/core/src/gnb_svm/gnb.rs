use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    /// `[π₀, π₁]`.
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub var_floor: f64,
}

/// Sums in sorted order so the result does not depend on row order.
fn order_free_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

/// Fits per-class column means and (population) variances.
///
/// Variances are floored at `var_smoothing × max column variance` over the
/// whole matrix, or at `var_smoothing` itself when every column is constant.
pub fn fit_gnb(m: &FeatureMatrix, y: &LabelVector, var_smoothing: f64) -> Result<GnbModel> {
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    if !(var_smoothing > 0.0) {
        return Err(Error::invalid("var_smoothing must be positive"));
    }
    y.require_both_classes()?;
    let p = m.n_cols();
    let labels = y.as_slice();
    let n = m.n_rows() as f64;

    let mut max_var: f64 = 0.0;
    for j in 0..p {
        let col = m.column(j);
        let mean = order_free_sum(col.clone()) / n;
        let var = order_free_sum(col.iter().map(|x| (x - mean) * (x - mean)).collect()) / n;
        max_var = max_var.max(var);
    }
    let var_floor = if max_var > 0.0 { var_smoothing * max_var } else { var_smoothing };

    let mut means: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
    let mut variances: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
    let mut counts = [0usize; 2];
    for &l in labels {
        counts[usize::from(l)] += 1;
    }
    for c in 0..2 {
        let nc = counts[c] as f64;
        for j in 0..p {
            let vals: Vec<f64> = m
                .rows()
                .zip(labels)
                .filter(|(_, &l)| usize::from(l) == c)
                .map(|(r, _)| r[j])
                .collect();
            let mean = order_free_sum(vals.clone()) / nc;
            let var = order_free_sum(vals.iter().map(|x| (x - mean) * (x - mean)).collect()) / nc;
            means[c][j] = mean;
            variances[c][j] = var.max(var_floor);
        }
    }
    Ok(GnbModel {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
        var_floor,
    })
}

impl GnbModel {
    /// `[log π₀ + Σ log N(x; μ₀, s₀²), log π₁ + Σ log N(x; μ₁, s₁²)]`.
    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.priors[c].ln();
            for ((xj, mu), var) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = xj - mu;
                s -= half_log_2pi + 0.5 * var.ln() + d * d / (2.0 * var);
            }
            *o = s;
        }
        out
    }

    /// Class posteriors `[P(y=0|x), P(y=1|x)]` by log-sum-exp.
    pub fn posteriors(&self, x: &[f64]) -> [f64; 2] {
        let lj = self.log_joint(x);
        let top = lj[0].max(lj[1]);
        let lse = top + ((lj[0] - top).exp() + (lj[1] - top).exp()).ln();
        [(lj[0] - lse).exp(), (lj[1] - lse).exp()]
    }

    /// `P(y = 1 | x)` per row.
    pub fn score(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        m.check_width(self.means[0].len())?;
        Ok(m.rows().map(|r| self.posteriors(r)[1]).collect())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "birthrisk-gnb v1\npriors {} {}\nvar_floor {}\nmean0 {}\nmean1 {}\nvar0 {}\nvar1 {}\n",
            self.priors[0],
            self.priors[1],
            self.var_floor,
            join(&self.means[0]),
            join(&self.means[1]),
            join(&self.variances[0]),
            join(&self.variances[1]),
        )
    }
}
