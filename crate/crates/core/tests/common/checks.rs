//! Fixture loops comparing library output with the reference computations.
//! Each returns a one-line summary on success and the first mismatch on
//! failure.

use birthrisk::gbt::{fit_gbt, GbtParams, Node, GAIN_TIE_TOLERANCE};
use birthrisk::gnb_svm::{fit_ocsvm, rbf_kernel};
use birthrisk::linear_models::{fit_lasso_targets, fit_ridge_targets, logistic_gradient, logistic_objective};
use birthrisk::metrics::{confusion, precision_recall, roc_auc};
use birthrisk::mlp::{fit_mlp, init_mlp, MlpModel, MlpParams};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gaussian_rows(r: &mut impl Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|j| (j as f64 + 1.0) * r.sample::<f64, _>(StandardNormal) + j as f64).collect())
        .collect()
}

/// 20-point fixtures with scores on a six-value grid, so ties are common.
pub fn auc_fixtures(count: usize) -> Check {
    let mut r = rng(1);
    let mut tied = 0;
    for case in 0..count {
        let (scores, y) = loop {
            let scores: Vec<f64> = (0..20).map(|_| f64::from(r.random_range(0..6u8)) / 5.0).collect();
            let y: Vec<u8> = (0..20).map(|_| r.random_range(0..2u8)).collect();
            if y.contains(&0) && y.contains(&1) {
                break (scores, y);
            }
        };
        let got = roc_auc(&scores, &y).map_err(|e| format!("fixture {case}: {e}"))?;
        let want = brute_auc(&scores, &y);
        ensure(got == want, || format!("fixture {case}: {got} vs pair count {want}"))?;
        tied += usize::from((0..20).any(|i| (0..20).any(|j| y[i] != y[j] && scores[i] == scores[j])));
    }
    Ok(format!("{count} fixtures exact, {tied} with tied pairs"))
}

/// Confusion counts by direct tally and precision/recall by hand formula.
pub fn precision_recall_fixtures(count: usize) -> Check {
    let mut r = rng(2);
    for case in 0..count {
        let n = r.random_range(1..60);
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        let p: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        let tally = |a: u8, b: u8| y.iter().zip(&p).filter(|&(&t, &q)| t == a && q == b).count() as u64;
        let (tp, fp, fn_) = (tally(1, 1), tally(0, 1), tally(1, 0));
        let c = confusion(&y, &p).map_err(|e| e.to_string())?;
        ensure((c.tp, c.fp, c.fn_, c.tn) == (tp, fp, fn_, tally(0, 0)), || format!("fixture {case}: counts {c:?}"))?;
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        ensure(precision_recall(&c) == (precision, recall), || format!("fixture {case}: {:?}", precision_recall(&c)))?;
    }
    Ok(format!("{count} fixtures"))
}

pub fn ridge_fixtures(count: usize) -> Check {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let (n, p) = (20 + case, 1 + case % 6);
        let rows = gaussian_rows(&mut r, n, p);
        let y: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let alpha = [0.0, 0.01, 0.5, 4.0][case % 4];
        let fit = fit_ridge_targets(&matrix(&rows), &y, alpha).map_err(|e| e.to_string())?;
        let (w, b) = normal_equations(&rows, &y, alpha);
        let err = max_abs_diff(&fit.weights, &w).max((fit.intercept - b).abs());
        worst = worst.max(err);
        ensure(err < 1e-8, || format!("fixture {case}: off by {err:e}"))?;
    }
    Ok(format!("{count} fixtures, max error {worst:.1e}"))
}

pub fn lasso_ols_fixtures(count: usize) -> Check {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let (n, p) = (30 + case, 1 + case % 5);
        let rows = gaussian_rows(&mut r, n, p);
        let y: Vec<f64> = rows.iter().map(|x| x.iter().sum::<f64>() * 0.3 + r.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_lasso_targets(&matrix(&rows), &y, 0.0, 1e-13, 100_000).map_err(|e| e.to_string())?;
        ensure(fit.converged, || format!("fixture {case}: no convergence"))?;
        let (w, b) = normal_equations(&rows, &y, 0.0);
        let err = max_abs_diff(&fit.weights, &w).max((fit.intercept - b).abs());
        worst = worst.max(err);
        ensure(err < 1e-6, || format!("fixture {case}: off by {err:e}"))?;
    }
    Ok(format!("{count} fixtures, max error {worst:.1e}"))
}

pub fn logistic_gradient_fixtures(count: usize) -> Check {
    let mut r = rng(13);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let (n, p) = (25, 1 + case % 5);
        let rows = gaussian_rows(&mut r, n, p);
        let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.4)).collect();
        let (m, y) = (matrix(&rows), labels(&y));
        let l2 = [0.0, 0.3, 2.0][case % 3];
        let mut point: Vec<f64> = (0..=p).map(|_| r.sample::<f64, _>(StandardNormal) * 0.3).collect();
        point[p] = -0.5;
        let (gw, gb) = logistic_gradient(&m, &y, &point[..p], point[p], l2);
        let fd = central_diff(&point, 1e-5, |v| logistic_objective(&m, &y, &v[..p], v[p], l2));
        for (k, (a, f)) in gw.iter().chain([&gb]).zip(&fd).enumerate() {
            let rel = (a - f).abs() / a.abs().max(f.abs());
            worst = worst.max(rel);
            ensure(rel < 1e-5, || format!("fixture {case} coordinate {k}: {a} vs {f}"))?;
        }
    }
    Ok(format!("{count} fixtures, max relative error {worst:.1e}"))
}

/// 50×6 fixture; odd columns are rounded so rows share values.
pub fn stump_fixture(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            (0..6)
                .map(|j| {
                    let v: f64 = r.random::<f64>() * 10.0;
                    if j % 2 == 1 {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let y: Vec<u8> = rows
        .iter()
        .map(|x| u8::from(r.random::<f64>() < if x[2] > 5.0 { 0.7 } else { 0.25 }))
        .collect();
    (rows, y)
}

pub fn stump_fixtures(count: u64) -> Check {
    let p = GbtParams { n_estimators: 1, max_depth: 1, subsample: 1.0, colsample_bytree: 1.0, ..GbtParams::default() };
    let mut splits = 0;
    for seed in 0..count {
        let (rows, y) = stump_fixture(seed);
        let model = fit_gbt(&matrix(&rows), &labels(&y), &p).map_err(|e| e.to_string())?;
        let expected = exhaustive_stump(&rows, &y, model.base_score, p.lambda, p.gamma, p.min_child_weight, GAIN_TIE_TOLERANCE);
        match (expected, &model.trees[0].nodes[0]) {
            (Some((col, thr, _)), Node::Split { column, threshold, .. }) => {
                ensure((*column, *threshold) == (col, thr), || {
                    format!("fixture {seed}: split ({column}, {threshold}) vs oracle ({col}, {thr})")
                })?;
                splits += 1;
            }
            (None, Node::Leaf { .. }) => {}
            (e, n) => return Err(format!("fixture {seed}: oracle {e:?}, root {n:?}")),
        }
    }
    Ok(format!("{count} fixtures, {splits} with a split"))
}

/// Mean cross-entropy and the smallest hidden pre-activation magnitude,
/// computed directly from the layer arrays.
pub fn mlp_reference_loss(model: &MlpModel, rows: &[Vec<f64>], y: &[u8]) -> (f64, f64) {
    let mut total = 0.0;
    let mut nearest_kink = f64::INFINITY;
    for (x, &t) in rows.iter().zip(y) {
        let mut a: Vec<f64> = x
            .iter()
            .zip(&model.input_mean)
            .zip(&model.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let last = model.layers.len() - 1;
        for (k, layer) in model.layers.iter().enumerate() {
            let z: Vec<f64> = (0..layer.n_out)
                .map(|o| layer.b[o] + (0..layer.n_in).map(|i| layer.w[o * layer.n_in + i] * a[i]).sum::<f64>())
                .collect();
            if k == last {
                a = z;
            } else {
                nearest_kink = z.iter().fold(nearest_kink, |m, v| m.min(v.abs()));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
        let z = a[0];
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        total += softplus - f64::from(t) * z;
    }
    (total / rows.len() as f64, nearest_kink)
}

fn nudge(model: &mut MlpModel, layer: usize, q: usize, delta: f64) {
    let l = &mut model.layers[layer];
    let nw = l.w.len();
    if q < nw {
        l.w[q] += delta;
    } else {
        l.b[q - nw] += delta;
    }
}

/// Every weight and bias of every layer against central differences of
/// [`mlp_reference_loss`]. Fixtures within 1e-6 of a ReLU kink are skipped.
/// Gradients below 1e-6 in magnitude are compared absolutely (1e-10), since
/// difference noise dominates a relative error there.
pub fn mlp_gradient_fixtures(count: u64) -> Check {
    let mut r = rng(21);
    let h = 1e-7;
    let (mut checked, mut params_checked) = (0, 0);
    let mut worst: f64 = 0.0;
    for case in 0..count {
        let (n, d) = (8 + case as usize % 5, 3 + case as usize % 4);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|k| (k % 2) as u8).collect();
        let (m, yl) = (matrix(&rows), labels(&y));
        let p = MlpParams { hidden: [5, 4, 3], seed: case, ..MlpParams::default() };
        let mut model = init_mlp(&m, &p).map_err(|e| e.to_string())?;
        for layer in &mut model.layers {
            for b in &mut layer.b {
                *b = 0.1 * r.sample::<f64, _>(StandardNormal);
            }
        }
        // a step of h moves any pre-activation by well under 1e-6 here
        let (_, kink) = mlp_reference_loss(&model, &rows, &y);
        if kink < 1e-6 {
            continue;
        }
        let all: Vec<usize> = (0..n).collect();
        let grads = model.backward(&m, &yl, &all).map_err(|e| e.to_string())?;
        for k in 0..model.layers.len() {
            let nw = grads[k].w.len();
            for q in 0..nw + grads[k].b.len() {
                let analytic = if q < nw { grads[k].w[q] } else { grads[k].b[q - nw] };
                let mut probe = model.clone();
                nudge(&mut probe, k, q, h);
                let (up, _) = mlp_reference_loss(&probe, &rows, &y);
                nudge(&mut probe, k, q, -2.0 * h);
                let (down, _) = mlp_reference_loss(&probe, &rows, &y);
                let fd = (up - down) / (2.0 * h);
                let scale = analytic.abs().max(fd.abs());
                let ok = if scale < 1e-6 {
                    (analytic - fd).abs() < 1e-10
                } else {
                    worst = worst.max((analytic - fd).abs() / scale);
                    (analytic - fd).abs() / scale < 1e-4
                };
                ensure(ok, || format!("fixture {case} layer {k} parameter {q}: {analytic} vs {fd}"))?;
                params_checked += 1;
            }
        }
        checked += 1;
    }
    ensure(checked * 4 >= count * 3, || format!("only {checked} of {count} fixtures clear of kinks"))?;
    Ok(format!("{checked} fixtures, {params_checked} parameters, max relative error {worst:.1e}"))
}

pub fn mlp_thread_independence() -> Check {
    let mut r = rng(22);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..5).map(|_| r.sample(StandardNormal)).collect()).collect();
    let y: Vec<u8> = rows.iter().map(|x| u8::from(x[0] + 0.5 * x[1] > 0.3)).collect();
    let (m, y) = (matrix(&rows), labels(&y));
    let p = MlpParams { hidden: [16, 8, 4], epochs: 5, batch_size: 32, seed: 9, ..MlpParams::default() };
    let bits = |threads: usize| -> Result<Vec<u64>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let model = pool.install(|| fit_mlp(&m, &y, &p)).map_err(|e| e.to_string())?;
        Ok(model.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).map(|v| v.to_bits())).collect())
    };
    let reference = bits(1)?;
    for threads in [2, 4, 8] {
        ensure(bits(threads)? == reference, || format!("weights differ at {threads} threads"))?;
    }
    Ok("identical bits at 1, 2, 4 and 8 threads".into())
}

/// A random one-class problem on at most six points whose box bound
/// `1/(νn)` sits on the oracle's lattice: `(points, γ, ν, bound)`.
pub fn dual_fixture(seed: u64) -> (Vec<Vec<f64>>, f64, f64, f64) {
    let mut r = rng(seed);
    let n = r.random_range(2..=6usize);
    let points = random_points(&mut r, n, 2);
    let gamma = r.random_range(0.5..6.0);
    let caps: Vec<f64> = [0.25, 0.5, 0.75, 1.0].into_iter().filter(|&c| c * n as f64 >= 1.0).collect();
    let c = caps[r.random_range(0..caps.len())];
    (points, gamma, 1.0 / (c * n as f64), c)
}

pub fn ocsvm_dual_fixtures(count: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..count {
        let (points, gamma, nu, c) = dual_fixture(seed);
        let model = fit_ocsvm(&matrix(&points), gamma, nu, 1e-12, 100_000).map_err(|e| e.to_string())?;
        let total: f64 = model.alpha.iter().sum();
        ensure((total - 1.0).abs() < 1e-9, || format!("fixture {seed}: Σα = {total}"))?;
        ensure(model.alpha.iter().all(|&a| a >= 0.0 && a <= c + 1e-12), || {
            format!("fixture {seed}: α outside [0, {c}]: {:?}", model.alpha)
        })?;
        let kernel: Vec<Vec<f64>> = points
            .iter()
            .map(|a| points.iter().map(|b| rbf_kernel(a, b, gamma).unwrap()).collect())
            .collect();
        let (grid, _) = grid_dual_minimum(&kernel, c, 40, 3);
        let gap = (model.objective - grid).abs();
        worst = worst.max(gap);
        ensure(gap < 1e-4, || format!("fixture {seed}: objective {} vs lattice {grid}", model.objective))?;
        ensure(model.objective <= grid + 1e-12, || format!("fixture {seed}: solver above lattice"))?;
    }
    Ok(format!("{count} fixtures, max gap {worst:.1e}"))
}
