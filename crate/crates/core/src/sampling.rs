//! Majority undersampling, stratified folds and recall-driven grid search.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, LabelVector};
use crate::metrics::{confusion, precision_recall};
use crate::model::ModelSpec;
use crate::rng::{sample_without_replacement, stream, streams};

/// Survival-to-NotSurvival ratio of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleRatio {
    #[serde(rename = "1:1")]
    OneToOne,
    #[serde(rename = "1:10")]
    OneToTen,
    #[serde(rename = "natural")]
    Natural,
}

impl SampleRatio {
    pub const ALL: [SampleRatio; 3] = [SampleRatio::OneToOne, SampleRatio::OneToTen, SampleRatio::Natural];

    pub fn label(self) -> &'static str {
        match self {
            SampleRatio::OneToOne => "1:1",
            SampleRatio::OneToTen => "1:10",
            SampleRatio::Natural => "natural",
        }
    }

    /// Majority rows kept given the class sizes.
    pub fn majority_target(self, minority: usize, majority: usize) -> usize {
        match self {
            SampleRatio::OneToOne => minority.min(majority),
            SampleRatio::OneToTen => (10 * minority).min(majority),
            SampleRatio::Natural => majority,
        }
    }
}

impl fmt::Display for SampleRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SampleRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SampleRatio::ALL
            .into_iter()
            .find(|r| r.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown sample ratio `{s}` (expected 1:1, 1:10 or natural)")))
    }
}

/// Row indices chosen by [`resample`], in output order.
pub fn resample_indices(y: &LabelVector, r: SampleRatio, seed: u64) -> Result<Vec<usize>> {
    y.require_both_classes()?;
    let (minority, majority): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| y.as_slice()[i] == 1);
    let mut rng = stream(seed, streams::RESAMPLE);
    let target = r.majority_target(minority.len(), majority.len());
    let mut idx = minority;
    idx.extend(sample_without_replacement(&mut rng, majority.len(), target).into_iter().map(|k| majority[k]));
    idx.shuffle(&mut rng);
    Ok(idx)
}

/// Keeps every minority row and a uniform sample (without replacement) of
/// majority rows sized by `r`, then shuffles.
pub fn resample(m: &FeatureMatrix, y: &LabelVector, r: SampleRatio, seed: u64) -> Result<(FeatureMatrix, LabelVector)> {
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    let idx = resample_indices(y, r, seed)?;
    Ok((m.select_rows(&idx), y.select(&idx)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Test rows of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Rows outside fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Shuffles each class separately and deals its rows round-robin, so every
/// fold's class counts differ by at most one.
pub fn stratified_kfold(y: &LabelVector, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    let pos = y.positives();
    let neg = y.negatives();
    if pos < k || neg < k {
        return Err(Error::EmptyPartition(format!(
            "each class needs at least {k} rows (have {pos} NotSurvival, {neg} Survival)"
        )));
    }
    let mut rng = stream(seed, streams::FOLDS);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [1u8, 0u8] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y.as_slice()[i] == class).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            folds[next % k].push(r);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Expands per-hyperparameter value lists over a base spec into grid
/// points. The last axis varies fastest.
pub fn expand_grid(base: &ModelSpec, axes: &[(String, Vec<serde_json::Value>)]) -> Result<Vec<ModelSpec>> {
    let base_json = serde_json::to_value(base).map_err(|e| Error::invalid(e.to_string()))?;
    let mut points = vec![base_json];
    for (name, values) in axes {
        if values.is_empty() {
            return Err(Error::invalid(format!("grid axis `{name}` has no values")));
        }
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                let obj = q.as_object_mut().expect("model specs serialize to objects");
                if name == "family" || !obj.contains_key(name) {
                    return Err(Error::invalid(format!(
                        "`{name}` is not a hyperparameter of {}",
                        base.family()
                    )));
                }
                obj.insert(name.clone(), v.clone());
                next.push(q);
            }
        }
        points = next;
    }
    points
        .into_iter()
        .map(|p| serde_json::from_value(p).map_err(|e| Error::invalid(format!("bad grid value: {e}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub spec: ModelSpec,
    /// Minority recall per fold; empty when the point failed.
    pub fold_recalls: Vec<f64>,
    pub mean_recall: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index of the winning row.
    pub best: usize,
}

impl GridResult {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.rows[self.best].spec
    }
}

/// Cross-validated minority recall at `threshold` for every grid point. A
/// point whose fit fails on any fold is kept in the table with the reason.
/// The winner has the highest mean recall, earliest point on ties.
pub fn grid_search(
    grid: &[ModelSpec],
    m: &FeatureMatrix,
    y: &LabelVector,
    plan: &FoldPlan,
    threshold: f64,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..plan.k).map(move |f| (g, f))).collect();
    let outcomes: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(g, f)| {
            let train = plan.train_rows(f);
            let test = &plan.folds[f];
            let model = grid[g].fit(&m.select_rows(&train), &y.select(&train), seed)?;
            let scores = model.score(&m.select_rows(test))?;
            let pred = model.labels(&scores, threshold);
            let c = confusion(y.select(test).as_slice(), pred.as_slice())?;
            Ok(precision_recall(&c).1)
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    for (g, spec) in grid.iter().enumerate() {
        let mut recalls = Vec::with_capacity(plan.k);
        let mut failure = None;
        for (f, out) in outcomes[g * plan.k..(g + 1) * plan.k].iter().enumerate() {
            match out {
                Ok(r) => recalls.push(*r),
                Err(e) => {
                    failure = Some(format!("fold {f}: {e}"));
                    break;
                }
            }
        }
        let (fold_recalls, mean_recall) = if failure.is_none() {
            let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
            (recalls, Some(mean))
        } else {
            (Vec::new(), None)
        };
        rows.push(GridRow { spec: spec.clone(), fold_recalls, mean_recall, failure });
    }
    let mut best: Option<usize> = None;
    for (g, row) in rows.iter().enumerate() {
        if let Some(r) = row.mean_recall {
            if best.is_none_or(|b| r > rows[b].mean_recall.unwrap()) {
                best = Some(g);
            }
        }
    }
    let best = best.ok_or_else(|| Error::invalid("every grid point failed"))?;
    Ok(GridResult { rows, best })
}
