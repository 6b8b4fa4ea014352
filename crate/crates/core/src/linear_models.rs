//! Linear baselines: L1 and L2 penalized least squares and logistic
//! regression, each usable as a classifier through a score threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, LabelVector};
use crate::linalg::{cholesky_solve, column_moments, dot};
use crate::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    L1(f64),
    L2(f64),
    /// Logistic loss with an optional L2 term on the weights.
    Logistic(f64),
}

impl Penalty {
    fn tag(&self) -> (&'static str, f64) {
        match *self {
            Penalty::L1(a) => ("L1", a),
            Penalty::L2(a) => ("L2", a),
            Penalty::Logistic(a) => ("LOGISTIC", a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub columns: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    pub threshold: f64,
    pub converged: bool,
    pub iterations: usize,
}

const FORMAT_HEADER: &str = "birthrisk-linear v1";

impl LinearModel {
    pub fn score(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        m.check_width(self.weights.len())?;
        let logistic = matches!(self.penalty, Penalty::Logistic(_));
        Ok(m
            .rows()
            .map(|row| {
                let z = dot(row, &self.weights) + self.intercept;
                if logistic {
                    sigmoid(z)
                } else {
                    z
                }
            })
            .collect())
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<LabelVector> {
        Ok(threshold_labels(&self.score(m)?, self.threshold))
    }

    pub fn to_text(&self) -> String {
        let (tag, a) = self.penalty.tag();
        let mut s = format!(
            "{FORMAT_HEADER}\npenalty {tag} {a}\nthreshold {}\nintercept {}\nconverged {}\niterations {}\ncolumns {}\n",
            self.threshold,
            self.intercept,
            self.converged,
            self.iterations,
            self.columns.len()
        );
        for (c, w) in self.columns.iter().zip(&self.weights) {
            s.push_str(&format!("{c}\t{w}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("missing or unsupported linear model header"));
        }
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
        let p = field("penalty")?;
        let a = num(p.get(1).ok_or_else(|| bad("penalty value"))?)?;
        let penalty = match p[0].as_str() {
            "L1" => Penalty::L1(a),
            "L2" => Penalty::L2(a),
            "LOGISTIC" => Penalty::Logistic(a),
            _ => return Err(bad("unknown penalty")),
        };
        let threshold = num(&field("threshold")?[0])?;
        let intercept = num(&field("intercept")?[0])?;
        let converged = field("converged")?[0] == "true";
        let iterations = field("iterations")?[0].parse().map_err(|_| bad("iterations"))?;
        let n: usize = field("columns")?[0].parse().map_err(|_| bad("column count"))?;
        let mut columns = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for line in lines.take(n) {
            let (c, w) = line.rsplit_once('\t').ok_or_else(|| bad("column line"))?;
            columns.push(c.to_string());
            weights.push(num(w)?);
        }
        if columns.len() != n {
            return Err(bad("truncated column list"));
        }
        Ok(LinearModel { columns, weights, intercept, penalty, threshold, converged, iterations })
    }
}

/// Label 1 iff score ≥ threshold.
pub fn threshold_labels(scores: &[f64], threshold: f64) -> LabelVector {
    LabelVector::from(scores.iter().map(|&s| u8::from(s >= threshold)).collect::<Vec<_>>())
}

struct Standardized {
    mean: Vec<f64>,
    sd: Vec<f64>,
    /// Non-constant columns.
    active: Vec<usize>,
    /// Column-major standardized values of the active columns.
    z: Vec<Vec<f64>>,
}

fn standardize(m: &FeatureMatrix) -> Standardized {
    let (n, p) = (m.n_rows(), m.n_cols());
    let (mean, sd) = column_moments(m.data(), n, p);
    let active: Vec<usize> = (0..p)
        .filter(|&j| sd[j] > 1e-12 * mean[j].abs().max(1.0))
        .collect();
    let z = active
        .iter()
        .map(|&j| (0..n).map(|i| (m.get(i, j) - mean[j]) / sd[j]).collect())
        .collect();
    Standardized { mean, sd, active, z }
}

fn check_rows(m: &FeatureMatrix, y: &LabelVector) -> Result<()> {
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    Ok(())
}

/// Minimizes `(1/2n)‖y − Xw − b‖² + α‖w‖₁` by cyclic coordinate descent with
/// soft-thresholding.
///
/// Columns are standardized internally, with the penalty rescaled per column
/// so the objective is the one above in the original units. Constant columns
/// get weight zero. Iteration stops when the largest coefficient change in a
/// sweep falls below `tol`; hitting `max_iter` sweeps clears `converged`.
pub fn fit_lasso(m: &FeatureMatrix, y: &LabelVector, alpha: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    check_rows(m, y)?;
    fit_lasso_targets(m, &y.as_f64(), alpha, tol, max_iter)
}

/// Lasso on real-valued targets.
pub fn fit_lasso_targets(m: &FeatureMatrix, yv: &[f64], alpha: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    if m.n_rows() != yv.len() {
        return Err(Error::Length { left: m.n_rows(), right: yv.len() });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid("lasso alpha must be nonnegative"));
    }
    let n = m.n_rows() as f64;
    let ybar = yv.iter().sum::<f64>() / n;
    let st = standardize(m);
    let k = st.active.len();
    let mut beta = vec![0.0; k];
    let mut resid: Vec<f64> = yv.iter().map(|v| v - ybar).collect();
    let mut converged = k == 0;
    let mut sweeps = 0;
    while !converged && sweeps < max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for a in 0..k {
            let zc = &st.z[a];
            let rho = dot(zc, &resid) / n + beta[a];
            let thresh = alpha / st.sd[st.active[a]];
            let new = soft_threshold(rho, thresh);
            let delta = new - beta[a];
            if delta != 0.0 {
                for (r, z) in resid.iter_mut().zip(zc) {
                    *r -= delta * z;
                }
                beta[a] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        converged = max_change < tol;
    }

    let mut weights = vec![0.0; m.n_cols()];
    for (a, &j) in st.active.iter().enumerate() {
        weights[j] = beta[a] / st.sd[j];
    }
    let intercept = ybar - dot(&weights, &st.mean);
    Ok(LinearModel {
        columns: m.column_names(),
        weights,
        intercept,
        penalty: Penalty::L1(alpha),
        threshold: 0.5,
        converged,
        iterations: sweeps,
    })
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Lasso objective `(1/2n)‖y − Xw − b‖² + α‖w‖₁`.
pub fn lasso_objective(m: &FeatureMatrix, y: &LabelVector, model: &LinearModel, alpha: f64) -> f64 {
    let n = m.n_rows() as f64;
    let rss: f64 = m
        .rows()
        .zip(y.as_slice())
        .map(|(row, &t)| {
            let r = f64::from(t) - dot(row, &model.weights) - model.intercept;
            r * r
        })
        .sum();
    rss / (2.0 * n) + alpha * model.weights.iter().map(|w| w.abs()).sum::<f64>()
}

/// Exact minimizer of `(1/2n)‖y − Xw − b‖² + (α/2)‖w‖²` with an unpenalized
/// intercept, from the centered regularized normal equations.
pub fn fit_ridge(m: &FeatureMatrix, y: &LabelVector, alpha: f64) -> Result<LinearModel> {
    fit_ridge_targets(m, &y.as_f64(), alpha).map(|mut model| {
        model.penalty = Penalty::L2(alpha);
        model
    })
}

/// Ridge on real-valued targets.
pub fn fit_ridge_targets(m: &FeatureMatrix, y: &[f64], alpha: f64) -> Result<LinearModel> {
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid("ridge alpha must be nonnegative"));
    }
    let (n, p) = (m.n_rows(), m.n_cols());
    let nf = n as f64;
    let (mean, _) = column_moments(m.data(), n, p);
    let ybar = y.iter().sum::<f64>() / nf;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut xc = vec![0.0; p];
    for (i, row) in m.rows().enumerate() {
        for j in 0..p {
            xc[j] = row[j] - mean[j];
        }
        let yc = y[i] - ybar;
        for j in 0..p {
            rhs[j] += xc[j] * yc;
            for k in 0..=j {
                gram[j * p + k] += xc[j] * xc[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..=j {
            let v = gram[j * p + k] / nf;
            gram[j * p + k] = v;
            gram[k * p + j] = v;
        }
        gram[j * p + j] += alpha;
        rhs[j] /= nf;
    }
    let weights = if p == 0 { Vec::new() } else { cholesky_solve(&gram, &rhs)? };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("non-finite ridge weights".into()));
    }
    let intercept = ybar - dot(&weights, &mean);
    Ok(LinearModel {
        columns: m.column_names(),
        weights,
        intercept,
        penalty: Penalty::L2(alpha),
        threshold: 0.5,
        converged: true,
        iterations: 1,
    })
}

/// Negative penalized log-likelihood `−ℓ(w, b) + (l2/2)‖w‖²`, summed over rows.
pub fn logistic_objective(m: &FeatureMatrix, y: &LabelVector, weights: &[f64], intercept: f64, l2: f64) -> f64 {
    let nll: f64 = m
        .rows()
        .zip(y.as_slice())
        .map(|(row, &t)| {
            let z = dot(row, weights) + intercept;
            softplus(z) - f64::from(t) * z
        })
        .sum();
    nll + 0.5 * l2 * dot(weights, weights)
}

/// Gradient of [`logistic_objective`] with respect to `(w, b)`.
pub fn logistic_gradient(m: &FeatureMatrix, y: &LabelVector, weights: &[f64], intercept: f64, l2: f64) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut gb = 0.0;
    for (row, &t) in m.rows().zip(y.as_slice()) {
        let r = sigmoid(dot(row, weights) + intercept) - f64::from(t);
        gb += r;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
    }
    (gw, gb)
}

/// Maximizes `ℓ(w,b) − (l2/2)‖w‖²` by damped Newton steps with Armijo
/// backtracking. The search runs in standardized coordinates; the objective
/// is unchanged. Stops when the largest per-row gradient component falls
/// below `tol`.
pub fn fit_logistic(m: &FeatureMatrix, y: &LabelVector, l2: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    check_rows(m, y)?;
    if !(l2 >= 0.0) {
        return Err(Error::invalid("l2 must be nonnegative"));
    }
    let n = m.n_rows();
    let nf = n as f64;
    let st = standardize(m);
    let k = st.active.len();
    let yv = y.as_f64();
    // penalty weight per standardized coefficient: w_j = beta_j / sd_j
    let pen: Vec<f64> = st.active.iter().map(|&j| l2 / (st.sd[j] * st.sd[j])).collect();

    let margins = |beta: &[f64], c: f64| -> Vec<f64> {
        let mut z = vec![c; n];
        for (a, col) in st.z.iter().enumerate() {
            let b = beta[a];
            if b != 0.0 {
                for (zi, v) in z.iter_mut().zip(col) {
                    *zi += b * v;
                }
            }
        }
        z
    };
    let objective = |z: &[f64], beta: &[f64]| -> f64 {
        let nll: f64 = z.iter().zip(&yv).map(|(&zi, &t)| softplus(zi) - t * zi).sum();
        let p: f64 = beta.iter().zip(&pen).map(|(b, q)| q * b * b).sum();
        (nll + 0.5 * p) / nf
    };

    let mut beta = vec![0.0; k];
    let mut c = 0.0;
    let mut z = margins(&beta, c);
    let mut f = objective(&z, &beta);
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iter {
        let p: Vec<f64> = z.iter().map(|&zi| sigmoid(zi)).collect();
        let resid: Vec<f64> = p.iter().zip(&yv).map(|(pi, t)| pi - t).collect();
        let wts: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        // coordinate 0 is the intercept, 1..=k the standardized weights
        let mut grad = vec![resid.iter().sum::<f64>() / nf];
        grad.extend((0..k).map(|a| (dot(&st.z[a], &resid) + pen[a] * beta[a]) / nf));
        let gmax = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gmax < tol {
            converged = true;
            break;
        }
        iters += 1;
        let d = k + 1;
        let col = |a: usize| -> &[f64] { &st.z[a - 1] };
        let mut hess = vec![0.0; d * d];
        hess[0] = wts.iter().sum::<f64>() / nf;
        for a in 1..d {
            let wa: Vec<f64> = col(a).iter().zip(&wts).map(|(x, w)| x * w).collect();
            hess[a] = wa.iter().sum::<f64>() / nf;
            hess[a * d] = hess[a];
            for b2 in a..d {
                let v = dot(&wa, col(b2)) / nf;
                hess[a * d + b2] = v;
                hess[b2 * d + a] = v;
            }
            hess[a * d + a] += pen[a - 1] / nf;
        }
        // a small ridge keeps separable problems solvable
        let ridge = 1e-10 * (0..d).map(|i| hess[i * d + i]).fold(0.0, f64::max).max(1e-300);
        for i in 0..d {
            hess[i * d + i] += ridge;
        }
        let dir = cholesky_solve(&hess, &grad)?;
        let slope = dot(&dir, &grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nb: Vec<f64> = beta.iter().zip(&dir[1..]).map(|(b, g)| b - step * g).collect();
            let nc = c - step * dir[0];
            let nz = margins(&nb, nc);
            let nf_val = objective(&nz, &nb);
            // near the optimum the sufficient decrease drops below rounding
            // error in f, so an exact non-increase is accepted there
            let slack = 1e-4 * step * slope;
            if nf_val <= f - slack || (slack <= 4.0 * f64::EPSILON * f.abs() && nf_val <= f) {
                beta = nb;
                c = nc;
                z = nz;
                f = nf_val;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let mut weights = vec![0.0; m.n_cols()];
    for (a, &j) in st.active.iter().enumerate() {
        weights[j] = beta[a] / st.sd[j];
    }
    let intercept = c - dot(&weights, &st.mean);
    if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        return Err(Error::Divergence("logistic weights became non-finite".into()));
    }
    Ok(LinearModel {
        columns: m.column_names(),
        weights,
        intercept,
        penalty: Penalty::Logistic(l2),
        threshold: 0.5,
        converged,
        iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_raw_rows(rows).unwrap()
    }

    #[test]
    fn huge_alpha_shrinks_everything() {
        let m = matrix(&[vec![1.0, 2.0], vec![2.0, 0.0], vec![3.0, 5.0], vec![4.0, 1.0]]);
        let y = LabelVector::from(vec![0, 1, 1, 1]);
        let las = fit_lasso(&m, &y, 1e6, 1e-10, 1000).unwrap();
        assert!(las.weights.iter().all(|&w| w == 0.0));
        assert_eq!(las.intercept, 0.75);
        let rid = fit_ridge(&m, &y, 1e12).unwrap();
        assert!(rid.weights.iter().all(|w| w.abs() < 1e-10));
        assert!((rid.intercept - 0.75).abs() < 1e-9);
    }

    #[test]
    fn lasso_one_dimensional_soft_threshold() {
        // y = 2x on centered-ish x; closed form w = S(cov, alpha)/var
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let m = matrix(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>());
        let alpha = 1e-3;
        let n = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - xbar).powi(2)).sum::<f64>() / n;
        let cov = 2.0 * var;
        let expected = (cov - alpha) / var;
        let model = fit_lasso_targets(&m, &ys, alpha, 1e-14, 1000).unwrap();
        let w = model.weights[0];
        assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        assert!((w - 2.0).abs() < 10.0 * alpha);
        assert!(model.converged);
    }

    #[test]
    fn ridge_duplicate_columns_split_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                vec![x, x]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 0.5).collect();
        let m = matrix(&rows);
        let model = fit_ridge_targets(&m, &y, 0.1).unwrap();
        assert!((model.weights[0] - model.weights[1]).abs() < 1e-12);
        // symmetric closed form: w = cov / (2 var + alpha) per copy
        let n = 30.0;
        let xbar = rows.iter().map(|r| r[0]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[0] - xbar).powi(2)).sum::<f64>() / n;
        let expected = 3.0 * var / (2.0 * var + 0.1);
        assert!((model.weights[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn logistic_zero_model_scores_half() {
        let m = matrix(&[vec![1.0], vec![-3.0]]);
        let model = LinearModel {
            columns: vec!["x0".into()],
            weights: vec![0.0],
            intercept: 0.0,
            penalty: Penalty::Logistic(0.0),
            threshold: 0.5,
            converged: true,
            iterations: 0,
        };
        assert_eq!(model.score(&m).unwrap(), vec![0.5, 0.5]);
        assert_eq!(model.predict(&m).unwrap().as_slice(), &[1, 1]);
        let mut lin = model.clone();
        lin.penalty = Penalty::L2(1.0);
        lin.intercept = 0.25;
        assert_eq!(lin.score(&m).unwrap(), vec![0.25, 0.25]);
    }

    #[test]
    fn logistic_fits_separable_data() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let y = LabelVector::from((0..20).map(|i| u8::from(i >= 10)).collect::<Vec<_>>());
        let m = matrix(&rows);
        let model = fit_logistic(&m, &y, 0.1, 1e-8, 5000).unwrap();
        assert_eq!(model.predict(&m).unwrap(), y);
        let zero = logistic_objective(&m, &y, &[0.0], 0.0, 0.1);
        assert!(logistic_objective(&m, &y, &model.weights, model.intercept, 0.1) <= zero);
    }

    #[test]
    fn predict_threshold_rules() {
        let labels = threshold_labels(&[0.4, 0.6, 0.5], 0.5);
        assert_eq!(labels.as_slice(), &[0, 1, 1]);
        let scores = [0.1, 0.3, 0.55, 0.7, 0.9];
        let y = [0u8, 1, 1, 0, 1];
        let mut last = f64::INFINITY;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let p = threshold_labels(&scores, t);
            let c = crate::metrics::confusion(&y, p.as_slice()).unwrap();
            let r = crate::metrics::precision_recall(&c).1;
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn score_checks_dimensions() {
        let model = fit_ridge(&matrix(&[vec![1.0], vec![2.0]]), &LabelVector::from(vec![0, 1]), 1.0).unwrap();
        assert!(matches!(
            model.score(&matrix(&[vec![1.0, 2.0]])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn text_format_round_trip() {
        let m = matrix(&[vec![1.0, 2.0], vec![2.0, 0.5], vec![3.0, 5.0], vec![4.0, 1.0]]);
        let y = LabelVector::from(vec![0, 1, 1, 0]);
        let model = fit_ridge(&m, &y, 0.3).unwrap();
        assert_eq!(LinearModel::from_text(&model.to_text()).unwrap(), model);
        assert!(LinearModel::from_text("nonsense").is_err());
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let m = matrix(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0], vec![4.0, 5.0]]);
        let y = LabelVector::from(vec![0, 0, 1, 1]);
        let las = fit_lasso(&m, &y, 0.01, 1e-12, 10_000).unwrap();
        assert_eq!(las.weights[1], 0.0);
        let log = fit_logistic(&m, &y, 1.0, 1e-9, 10_000).unwrap();
        assert_eq!(log.weights[1], 0.0);
        assert!(log.converged, "{log:?}");
    }
}
