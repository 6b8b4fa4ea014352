//! Second-order gradient-boosted regression trees with logistic loss.
//!
//! Exact greedy split search: every column is sorted once up front, and each
//! tree level is grown by one pass over every sampled column that updates
//! per-node running sums. Candidate thresholds are midpoints between
//! consecutive distinct values; a row goes left when `x < threshold`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, LabelVector};
use crate::rng::{sample_without_replacement, stream, streams};
use crate::{logit, sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub max_depth: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    pub subsample: f64,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub colsample_bytree: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    /// Initial probability; `None` uses the training minority fraction.
    pub base_score: Option<f64>,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            max_depth: 3,
            min_child_weight: 3.0,
            subsample: 0.7,
            learning_rate: 0.01,
            n_estimators: 1250,
            colsample_bytree: 0.8,
            lambda: 1.0,
            gamma: 0.0,
            base_score: None,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if !(self.min_child_weight >= 0.0) {
            return Err(Error::invalid("min_child_weight must be nonnegative"));
        }
        if !unit(self.subsample) || !unit(self.colsample_bytree) {
            return Err(Error::invalid("subsample and colsample_bytree must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::invalid("lambda and gamma must be nonnegative"));
        }
        if let Some(b) = self.base_score {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid("base_score must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        /// Training hessian sum reaching this node.
        cover: f64,
    },
    Leaf {
        weight: f64,
        cover: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
    /// Columns this tree was allowed to split on.
    pub columns: Vec<usize>,
}

impl RegressionTree {
    pub fn leaf_weight(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split { column, threshold, left, right, .. } => {
                    k = if x[column] < threshold { left } else { right };
                }
                Node::Leaf { weight, .. } => return weight,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    /// Probability the additive model starts from.
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub column_names: Vec<String>,
    /// Source feature of each column (one-hot columns share a source).
    pub column_sources: Vec<String>,
    /// Mean training logistic loss before round 1 and after every round.
    pub loss_history: Vec<f64>,
    /// Set when the training labels were all one class.
    pub degenerate: bool,
}

/// Split gain: `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// A threshold strictly above `lo` and at most `hi` (`lo < hi`).
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t > lo && t <= hi {
        t
    } else {
        hi
    }
}

/// Gains closer than this (relative) are ties: summing the same gradients in
/// a different row order moves a gain by a few ulps, and that must not
/// override the lowest-column, lowest-threshold rule.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-9;

fn beats(gain: f64, incumbent: f64) -> bool {
    gain > incumbent + GAIN_TIE_TOLERANCE * incumbent.abs()
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    column: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
}

#[derive(Clone, Copy)]
struct Scan {
    gl: f64,
    hl: f64,
    last: f64,
    seen: bool,
}

/// Per-node best split on one column, in a single pass over its sorted rows.
#[allow(clippy::too_many_arguments)]
fn scan_column(
    order: &[u32],
    values: &[f64],
    node_of: &[u32],
    slot: &[usize],
    totals: &[(f64, f64)],
    g: &[f64],
    h: &[f64],
    column: usize,
    p: &GbtParams,
) -> Vec<Option<Candidate>> {
    let mut state = vec![Scan { gl: 0.0, hl: 0.0, last: 0.0, seen: false }; totals.len()];
    let mut best: Vec<Option<Candidate>> = vec![None; totals.len()];
    for (&r, &v) in order.iter().zip(values) {
        let node = node_of[r as usize];
        if node == u32::MAX {
            continue;
        }
        let s = slot[node as usize];
        if s == usize::MAX {
            continue;
        }
        let st = &mut state[s];
        if st.seen && v > st.last {
            let (gt, ht) = totals[s];
            let (gl, hl) = (st.gl, st.hl);
            let hr = ht - hl;
            if hl >= p.min_child_weight && hr >= p.min_child_weight {
                let gain = split_gain(gl, hl, gt - gl, hr, p.lambda, p.gamma);
                if best[s].is_none_or(|b| beats(gain, b.gain)) {
                    best[s] = Some(Candidate { gain, column, threshold: midpoint(st.last, v), gl, hl });
                }
            }
        }
        st.gl += g[r as usize];
        st.hl += h[r as usize];
        st.last = v;
        st.seen = true;
    }
    best
}

struct Presorted {
    /// Per column: row indices in increasing value order.
    order: Vec<Vec<u32>>,
    /// Per column: values aligned with `order`.
    values: Vec<Vec<f64>>,
}

fn presort(m: &FeatureMatrix) -> Presorted {
    let (order, values) = (0..m.n_cols())
        .into_par_iter()
        .map(|j| {
            let col = m.column(j);
            let mut idx: Vec<u32> = (0..m.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            let vals = idx.iter().map(|&i| col[i as usize]).collect();
            (idx, vals)
        })
        .unzip();
    Presorted { order, values }
}

fn build_tree(
    m: &FeatureMatrix,
    sorted: &Presorted,
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    columns: Vec<usize>,
    p: &GbtParams,
) -> RegressionTree {
    let mut node_of = vec![u32::MAX; m.n_rows()];
    for &r in rows {
        node_of[r] = 0;
    }
    let root_g: f64 = rows.iter().map(|&r| g[r]).sum();
    let root_h: f64 = rows.iter().map(|&r| h[r]).sum();
    // (node id, G, H)
    let mut frontier = vec![(0usize, root_g, root_h)];
    let mut nodes = vec![Node::Leaf { weight: 0.0, cover: root_h }];

    for _ in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &(id, _, _)) in frontier.iter().enumerate() {
            slot[id] = s;
        }
        let totals: Vec<(f64, f64)> = frontier.iter().map(|&(_, gs, hs)| (gs, hs)).collect();
        let per_column: Vec<Vec<Option<Candidate>>> = columns
            .par_iter()
            .map(|&j| scan_column(&sorted.order[j], &sorted.values[j], &node_of, &slot, &totals, g, h, j, p))
            .collect();
        // columns are ascending, so requiring a clear win keeps the lowest
        // column on ties; within a column the scan already kept the lowest
        // threshold
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for col_best in &per_column {
            for (b, c) in best.iter_mut().zip(col_best) {
                if let Some(c) = c {
                    if b.is_none_or(|cur| beats(c.gain, cur.gain)) {
                        *b = Some(*c);
                    }
                }
            }
        }

        let mut next = Vec::new();
        let mut split_at = vec![None; nodes.len()];
        for (s, &(id, gs, hs)) in frontier.iter().enumerate() {
            let Some(c) = best[s].filter(|c| c.gain > 0.0) else { continue };
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { weight: 0.0, cover: c.hl });
            nodes.push(Node::Leaf { weight: 0.0, cover: hs - c.hl });
            nodes[id] = Node::Split {
                column: c.column,
                threshold: c.threshold,
                left,
                right,
                gain: c.gain,
                cover: hs,
            };
            split_at[id] = Some((c.column, c.threshold, left as u32, right as u32));
            next.push((left, c.gl, c.hl));
            next.push((right, gs - c.gl, hs - c.hl));
        }
        for &r in rows {
            let k = node_of[r];
            if let Some(Some((col, thr, l, rt))) = split_at.get(k as usize) {
                node_of[r] = if m.get(r, *col) < *thr { *l } else { *rt };
            }
        }
        // recompute child sums from rows so they match the replay exactly
        let mut sums = vec![(0.0, 0.0); nodes.len()];
        for &r in rows {
            let k = node_of[r] as usize;
            sums[k].0 += g[r];
            sums[k].1 += h[r];
        }
        frontier = next.into_iter().map(|(id, _, _)| (id, sums[id].0, sums[id].1)).collect();
    }

    // leaf weights from the final row assignment
    let mut sums = vec![(0.0, 0.0); nodes.len()];
    for &r in rows {
        let k = node_of[r] as usize;
        sums[k].0 += g[r];
        sums[k].1 += h[r];
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { weight, cover } = node {
            let (gs, hs) = sums[k];
            *weight = -gs / (hs + p.lambda);
            *cover = hs;
        }
    }
    RegressionTree { nodes, columns }
}

fn mean_log_loss(margin: &[f64], y: &[f64]) -> f64 {
    margin.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / margin.len() as f64
}

/// Fits a boosted ensemble. Labels of a single class yield a model with no
/// trees whose base score is the (clamped) class frequency, with
/// `degenerate` set.
pub fn fit_gbt(m: &FeatureMatrix, y: &LabelVector, p: &GbtParams) -> Result<GbtModel> {
    p.validate()?;
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("cannot fit boosted trees on zero rows"));
    }
    let n = m.n_rows();
    let yv = y.as_f64();
    let degenerate = y.positives() == 0 || y.negatives() == 0;
    let base_score = match p.base_score {
        Some(b) => b,
        None => (y.positives() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6),
    };
    let mut model = GbtModel {
        params: p.clone(),
        base_score,
        trees: Vec::new(),
        column_names: m.column_names(),
        column_sources: m.columns().iter().map(|c| c.source.clone()).collect(),
        loss_history: Vec::new(),
        degenerate,
    };
    let mut margin = vec![logit(base_score); n];
    model.loss_history.push(mean_log_loss(&margin, &yv));
    if degenerate || m.n_cols() == 0 {
        return Ok(model);
    }

    let sorted = presort(m);
    let mut row_rng = stream(p.seed, streams::GBT_ROWS);
    let mut col_rng = stream(p.seed, streams::GBT_COLS);
    let n_rows = ((p.subsample * n as f64).floor() as usize).max(1);
    let n_cols = ((p.colsample_bytree * m.n_cols() as f64).floor() as usize).max(1);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..p.n_estimators {
        for i in 0..n {
            let q = sigmoid(margin[i]);
            g[i] = q - yv[i];
            h[i] = q * (1.0 - q);
        }
        let rows = sample_without_replacement(&mut row_rng, n, n_rows);
        let cols = sample_without_replacement(&mut col_rng, m.n_cols(), n_cols);
        let tree = build_tree(m, &sorted, &g, &h, &rows, cols, p);
        for (i, z) in margin.iter_mut().enumerate() {
            *z += p.learning_rate * tree.leaf_weight(m.row(i));
        }
        model.loss_history.push(mean_log_loss(&margin, &yv));
        model.trees.push(tree);
    }
    Ok(model)
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        logit(self.base_score) + self.params.learning_rate * self.trees.iter().map(|t| t.leaf_weight(x)).sum::<f64>()
    }

    /// `P(y = 1 | x)` per row.
    pub fn score(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        m.check_width(self.column_names.len())?;
        Ok((0..m.n_rows()).into_par_iter().map(|i| sigmoid(self.margin(m.row(i)))).collect())
    }

    /// Total split gain per source feature, descending. Every source feature
    /// appears; ties keep first-appearance (schema) order.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut sources: Vec<String> = Vec::new();
        for s in &self.column_sources {
            if !sources.contains(s) {
                sources.push(s.clone());
            }
        }
        let mut gain = vec![0.0; sources.len()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { column, gain: g, .. } = node {
                    let k = sources.iter().position(|s| *s == self.column_sources[*column]).unwrap();
                    gain[k] += g;
                }
            }
        }
        let mut ranked: Vec<(String, f64)> = sources.into_iter().zip(gain).collect();
        // stable sort keeps schema order among equal gains
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "birthrisk-gbt v1\nbase_score {}\nlearning_rate {}\ncolumns {}\n",
            self.base_score,
            self.params.learning_rate,
            self.column_names.len()
        );
        for (name, src) in self.column_names.iter().zip(&self.column_sources) {
            s.push_str(&format!("column {name} {src}\n"));
        }
        s.push_str(&format!("trees {}\n", self.trees.len()));
        for (t, tree) in self.trees.iter().enumerate() {
            let cols: Vec<String> = tree.columns.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!("tree {t} nodes {} columns {}\n", tree.nodes.len(), cols.join(",")));
            for (k, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Split { column, threshold, left, right, gain, cover } => s.push_str(&format!(
                        "{k} split {column} {threshold} {left} {right} {gain} {cover}\n"
                    )),
                    Node::Leaf { weight, cover } => s.push_str(&format!("{k} leaf {weight} {cover}\n")),
                }
            }
        }
        s
    }
}
