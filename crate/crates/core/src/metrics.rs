//! Minority-class precision and recall, ROC-AUC as a rank statistic, and
//! per-stratum recall tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with label 1 (NotSurvival) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Length {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::invalid(format!("labels must be 0/1, got ({t}, {p})"))),
        }
    }
    Ok(c)
}

/// `(precision, recall)` for the positive class. A zero denominator yields 0.
pub fn precision_recall(c: &ConfusionCounts) -> (f64, f64) {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// ROC-AUC as the Mann-Whitney statistic: the fraction of (positive, negative)
/// pairs ranked correctly, ties counting one half. Runs in O(n log n).
///
/// Concordant and tied pair counts are accumulated as integers, so the result
/// is the exact ratio rounded once.
pub fn roc_auc(scores: &[f64], y_true: &[u8]) -> Result<f64> {
    if scores.len() != y_true.len() {
        return Err(Error::Length {
            left: scores.len(),
            right: y_true.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count() as u128;
    let n_neg = y_true.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptyClass("AUC is undefined for a single-class sample".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the Mann-Whitney U: 2 per concordant pair, 1 per tie.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == s {
            if y_true[order[j]] == 1 {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        twice_u += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: String,
    pub deaths: u64,
    pub predicted_deaths: u64,
    /// `None` when the stratum has no deaths.
    pub recall: Option<f64>,
}

/// Per-stratum recall over true deaths. `strata[i]` names the stratum of row
/// `i` and must be present for every true death; `order` fixes the row order
/// of the table (strata outside `order` are rejected).
pub fn stratified_recall<S: PartialEq + ToString>(
    y_true: &[u8],
    y_pred: &[u8],
    strata: &[Option<S>],
    order: &[S],
) -> Result<Vec<StratumRow>> {
    if y_true.len() != y_pred.len() || y_true.len() != strata.len() {
        return Err(Error::Length {
            left: y_true.len(),
            right: y_pred.len().min(strata.len()),
        });
    }
    let mut deaths = vec![0u64; order.len()];
    let mut caught = vec![0u64; order.len()];
    for (i, ((&t, &p), s)) in y_true.iter().zip(y_pred).zip(strata).enumerate() {
        if t != 1 {
            continue;
        }
        let s = s
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("death at row {i} has no stratum")))?;
        let k = order
            .iter()
            .position(|o| o == s)
            .ok_or_else(|| Error::invalid(format!("stratum `{}` not in table order", s.to_string())))?;
        deaths[k] += 1;
        caught[k] += u64::from(p == 1);
    }
    Ok(order
        .iter()
        .enumerate()
        .map(|(k, s)| StratumRow {
            stratum: s.to_string(),
            deaths: deaths[k],
            predicted_deaths: caught[k],
            recall: (deaths[k] > 0).then(|| caught[k] as f64 / deaths[k] as f64),
        })
        .collect())
}

/// Everything reported for one fitted model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub confusion: ConfusionCounts,
    pub n: u64,
    pub positives: u64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mortality_strata: Option<Vec<StratumRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_strata: Option<CauseTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseTable {
    pub rows: Vec<StratumRow>,
    /// Deaths without a linked cause, left out of `rows`.
    pub unlinked_excluded: u64,
}

/// Scores and hard labels against truth. Fails on a single-class test set,
/// where AUC is undefined.
pub fn evaluate(scores: &[f64], y_pred: &[u8], y_true: &[u8], threshold: f64) -> Result<EvaluationReport> {
    let c = confusion(y_true, y_pred)?;
    let (precision, recall) = precision_recall(&c);
    let auc = roc_auc(scores, y_true)?;
    Ok(EvaluationReport {
        precision,
        recall,
        auc,
        confusion: c,
        n: c.total(),
        positives: c.tp + c.fn_,
        threshold,
        mortality_strata: None,
        cause_strata: None,
    })
}
