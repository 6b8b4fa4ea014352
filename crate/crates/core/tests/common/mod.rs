//! Reference computations written independently of the library code.
#![allow(dead_code)]

pub mod checks;

use birthrisk::domain::Value;
use birthrisk::ingest::{Dataset, FeatureMatrix, LabelVector};
use birthrisk::synth::{GeneratorConfig, Marginal, SyntheticDataset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_raw_rows(rows).unwrap()
}

pub fn labels(y: &[u8]) -> LabelVector {
    LabelVector::new(y.to_vec()).unwrap()
}

/// AUC by enumerating every positive-negative pair.
pub fn brute_auc(scores: &[f64], y: &[u8]) -> f64 {
    let (mut concordant, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for (i, &yi) in y.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in y.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                concordant += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (concordant as f64 + 0.5 * ties as f64) / pairs as f64
}

/// Minimizer of `(1/2n)‖y − Xw − b‖² + (α/2)‖w‖²` from the uncentered normal
/// equations with an unpenalized intercept, solved by LU. Returns `(w, b)`.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let n = rows.len();
    let p = rows[0].len();
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let mut a = x.transpose() * &x / n as f64;
    for j in 1..=p {
        a[(j, j)] += alpha;
    }
    let rhs = x.transpose() * yv / n as f64;
    let beta = a.lu().solve(&rhs).expect("full-rank fixture");
    (beta.iter().skip(1).copied().collect(), beta[0])
}

/// Central finite differences of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Best depth-one split on the first boosting round by trying every
/// midpoint between consecutive distinct column values. Returns
/// `(column, threshold, gain)`. Gains within relative `tie` of each other
/// are ties, which keep the earliest column, then the smallest threshold.
/// `None` when no split has positive gain with both children at or above
/// `min_child_weight`.
pub fn exhaustive_stump(
    rows: &[Vec<f64>],
    y: &[u8],
    base: f64,
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
    tie: f64,
) -> Option<(usize, f64, f64)> {
    let g: Vec<f64> = y.iter().map(|&t| base - f64::from(t)).collect();
    let h = base * (1.0 - base);
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let mut best: Option<(usize, f64, f64)> = None;
    for col in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            let thr = if mid > w[0] && mid <= w[1] { mid } else { w[1] };
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for (r, gi) in rows.iter().zip(&g) {
                if r[col] < thr {
                    gl += gi;
                    hl += h;
                } else {
                    gr += gi;
                    hr += h;
                }
            }
            if hl < min_child_weight || hr < min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma;
            if gain > 0.0 && best.is_none_or(|(_, _, b)| gain > b + tie * b.abs()) {
                best = Some((col, thr, gain));
            }
        }
    }
    best
}

/// `½ αᵀKα`.
pub fn dual_objective(kernel: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ai) in alpha.iter().enumerate() {
        for (j, aj) in alpha.iter().enumerate() {
            s += ai * aj * kernel[i][j];
        }
    }
    0.5 * s
}

/// Minimum of the one-class dual over a lattice of the feasible set
/// `{Σα = 1, 0 ≤ α ≤ c}`: exhaustive on a grid of step `1/base`, then
/// exhaustive again in a window around the incumbent on grids refined by a
/// factor of 4 each level. `c·base` must be an integer so the box faces lie
/// on every lattice.
pub fn grid_dual_minimum(kernel: &[Vec<f64>], c: f64, base: i64, levels: usize) -> (f64, Vec<f64>) {
    let n = kernel.len();
    let mut denom = base;
    let cap = |d: i64| (c * d as f64).round() as i64;
    let mut lower = vec![0i64; n - 1];
    let mut upper = vec![cap(denom); n - 1];
    let mut best = (f64::INFINITY, Vec::new());
    for level in 0..=levels {
        let mut found: Option<Vec<i64>> = None;
        let mut counts = vec![0i64; n];
        enumerate(&mut counts, 0, &lower, &upper, denom, cap(denom), &mut |k: &[i64]| {
            let alpha: Vec<f64> = k.iter().map(|&v| v as f64 / denom as f64).collect();
            let obj = dual_objective(kernel, &alpha);
            if obj < best.0 {
                best = (obj, alpha);
                found = Some(k.to_vec());
            }
        });
        if level == levels {
            break;
        }
        let centre: Vec<i64> = match found {
            Some(k) => k,
            None => best.1.iter().map(|a| (a * denom as f64).round() as i64).collect(),
        };
        denom *= 4;
        let window = 8;
        lower = centre[..n - 1].iter().map(|&k| (4 * k - window).max(0)).collect();
        upper = centre[..n - 1].iter().map(|&k| (4 * k + window).min(cap(denom))).collect();
    }
    best
}

fn enumerate(
    counts: &mut [i64],
    pos: usize,
    lower: &[i64],
    upper: &[i64],
    total: i64,
    cap: i64,
    visit: &mut impl FnMut(&[i64]),
) {
    let n = counts.len();
    let used: i64 = counts[..pos].iter().sum();
    if pos == n - 1 {
        let last = total - used;
        if (0..=cap).contains(&last) {
            counts[pos] = last;
            visit(counts);
        }
        return;
    }
    for k in lower[pos]..=upper[pos].min(total - used) {
        counts[pos] = k;
        enumerate(counts, pos + 1, lower, upper, total, cap, visit);
    }
}

/// Random points in the unit square.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Asymptotic Kolmogorov survival function with the small-sample
/// correction `λ = (√n + 0.12 + 0.11/√n)·D`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Pearson chi-square statistic of observed counts against probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// p-value of each feature's observed values against its configured
/// marginal: KS for continuous features, chi-square for categories.
pub fn marginal_p_values(cfg: &GeneratorConfig, ds: &SyntheticDataset) -> Vec<(String, f64)> {
    let records = ds.dataset.records();
    cfg.features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let numbers = || records.iter().filter_map(|r| match r.values[j] {
                Value::Number(x) => Some(x),
                _ => None,
            });
            let categories = |k: usize| {
                let mut counts = vec![0u64; k];
                for r in records {
                    if let Value::Category(c) = r.values[j] {
                        counts[c] += 1;
                    }
                }
                counts
            };
            let chi_p = |counts: &[u64], probs: &[f64]| {
                let stat = chi_square(counts, probs);
                ChiSquared::new((probs.len() - 1) as f64).unwrap().sf(stat)
            };
            let p = match &f.marginal {
                Marginal::Normal { mean, sd, .. } => {
                    let dist = Normal::new(*mean, *sd).unwrap();
                    let mut xs: Vec<f64> = numbers().collect();
                    let d = ks_statistic(&mut xs, |x| dist.cdf(x));
                    ks_p_value(d, xs.len())
                }
                Marginal::Uniform { low, high } => {
                    let mut xs: Vec<f64> = numbers().collect();
                    let d = ks_statistic(&mut xs, |x| ((x - low) / (high - low)).clamp(0.0, 1.0));
                    ks_p_value(d, xs.len())
                }
                Marginal::Categorical { probs, .. } => chi_p(&categories(probs.len()), probs),
                Marginal::Binned { source, cuts, categories: names } => {
                    let src = cfg.features.iter().find(|g| &g.name == source).unwrap();
                    let Marginal::Normal { mean, sd, .. } = src.marginal else { panic!("binned source must be normal") };
                    let dist = Normal::new(mean, sd).unwrap();
                    let mut edges = vec![0.0];
                    edges.extend(cuts.iter().map(|&c| dist.cdf(c)));
                    edges.push(1.0);
                    let probs: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
                    chi_p(&categories(names.len()), &probs)
                }
            };
            (f.name.clone(), p)
        })
        .collect()
}

/// Every test value replaced: huge numbers, the last category, and a
/// missing value in every third row.
pub fn poison(test: &Dataset) -> Dataset {
    let schema = test.schema().clone();
    let records = test
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            for (j, v) in r.values.iter_mut().enumerate() {
                let spec = &schema.features()[j];
                *v = if i % 3 == 0 && spec.allows_missing {
                    Value::Missing
                } else {
                    match v {
                        Value::Number(_) | Value::Missing if spec.categories.is_empty() => Value::Number(1e12),
                        _ => Value::Category(spec.categories.len() - 1),
                    }
                };
            }
            r
        })
        .collect();
    Dataset::new(schema, records).unwrap()
}
