//! Feed-forward network with three ReLU hidden layers and a sigmoid output,
//! trained on mean binary cross-entropy with Adam.
//!
//! Inputs are standardized inside the model using training statistics.
//! Training runs strictly sequentially, so a fixed seed gives bitwise
//! identical weights regardless of the thread pool.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, LabelVector};
use crate::linalg::column_moments;
use crate::rng::{stream, streams};
use crate::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: [usize; 3],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplier on the Glorot bound `sqrt(6 / (fan_in + fan_out))`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: [64, 32, 16],
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("hidden sizes, epochs and batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !(self.epsilon > 0.0) || !(self.init_scale > 0.0) {
            return Err(Error::invalid("learning_rate must be nonnegative; epsilon and init_scale positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Dense layer, `w` row-major `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input → h1 → h2 → h3 → 1.
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    /// Scales used for standardization; constant columns use 1.
    pub input_scale: Vec<f64>,
    /// Mean training loss before the first update, then after each epoch.
    pub loss_history: Vec<f64>,
}

/// Per-parameter gradients, shaped like the model's layers.
pub type Gradients = Vec<Layer>;

impl MlpModel {
    /// A model with every weight and bias zero and identity standardization.
    pub fn zeros(n_in: usize, hidden: [usize; 3]) -> Self {
        let sizes = [n_in, hidden[0], hidden[1], hidden[2], 1];
        MlpModel {
            layers: sizes.windows(2).map(|s| Layer::zeros(s[0], s[1])).collect(),
            input_mean: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
            loss_history: Vec::new(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Output logit for a standardized input, keeping every layer's
    /// pre-activation for backpropagation.
    fn forward_trace(&self, z0: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![z0.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(acts.last().unwrap(), &mut out);
            let a = if k == last { out.clone() } else { out.iter().map(|v| v.max(0.0)).collect() };
            pre.push(out);
            acts.push(a);
        }
        (acts, pre)
    }

    /// Output logit for a raw input row.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let (_, pre) = self.forward_trace(&self.standardize(x));
        pre.last().unwrap()[0]
    }

    /// `P(y = 1 | x)` per row.
    pub fn forward(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        m.check_width(self.n_inputs())?;
        Ok(m.rows().map(|r| sigmoid(self.logit(r))).collect())
    }

    /// Mean binary cross-entropy on the given rows, from logits.
    pub fn loss(&self, m: &FeatureMatrix, y: &LabelVector) -> f64 {
        let rows: Vec<usize> = (0..m.n_rows()).collect();
        self.batch_loss(m, y.as_slice(), &rows)
    }

    fn batch_loss(&self, m: &FeatureMatrix, y: &[u8], rows: &[usize]) -> f64 {
        rows.iter()
            .map(|&i| {
                let z = self.logit(m.row(i));
                softplus(z) - f64::from(y[i]) * z
            })
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Exact gradient of the mean batch cross-entropy by reverse
    /// accumulation. The output delta uses the fused form `(p − y)/B`.
    pub fn backward(&self, m: &FeatureMatrix, y: &LabelVector, rows: &[usize]) -> Result<Gradients> {
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        m.check_width(self.n_inputs())?;
        if m.n_rows() != y.len() {
            return Err(Error::Length { left: m.n_rows(), right: y.len() });
        }
        Ok(self.batch_gradients(m, y.as_slice(), rows))
    }

    fn batch_gradients(&self, m: &FeatureMatrix, y: &[u8], rows: &[usize]) -> Gradients {
        let mut grads: Gradients = self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        let inv_b = 1.0 / rows.len() as f64;
        let last = self.layers.len() - 1;
        for &i in rows {
            let (acts, pre) = self.forward_trace(&self.standardize(m.row(i)));
            let mut delta = vec![(sigmoid(pre[last][0]) - f64::from(y[i])) * inv_b];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let input = &acts[k];
                let g = &mut grads[k];
                for o in 0..layer.n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.b[o] += d;
                    let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, x) in row.iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if k == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.n_in];
                for o in 0..layer.n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&pre[k - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grads
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!("birthrisk-mlp v1\nlayers {}\n", self.layers.len());
        s.push_str(&format!("input_mean {}\ninput_scale {}\n", join(&self.input_mean), join(&self.input_scale)));
        for (k, l) in self.layers.iter().enumerate() {
            s.push_str(&format!("layer {k} {} {}\nw {}\nb {}\n", l.n_out, l.n_in, join(&l.w), join(&l.b)));
        }
        s
    }
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros = || model.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, p: &MlpParams) {
        self.t += 1;
        let c1 = 1.0 - p.beta1.powi(self.t);
        let c2 = 1.0 - p.beta2.powi(self.t);
        let update = |param: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..param.len() {
                m[k] = p.beta1 * m[k] + (1.0 - p.beta1) * g[k];
                v[k] = p.beta2 * v[k] + (1.0 - p.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                param[k] -= p.learning_rate * mh / (vh.sqrt() + p.epsilon);
            }
        };
        for (k, layer) in model.layers.iter_mut().enumerate() {
            update(&mut layer.w, &grads[k].w, &mut self.m[k].w, &mut self.v[k].w);
            update(&mut layer.b, &grads[k].b, &mut self.m[k].b, &mut self.v[k].b);
        }
    }
}

/// Seeded initialization: weights uniform in `±init_scale·sqrt(6/(fan_in+fan_out))`,
/// biases zero, standardization from `m`.
pub fn init_mlp(m: &FeatureMatrix, p: &MlpParams) -> Result<MlpModel> {
    p.validate()?;
    let mut model = MlpModel::zeros(m.n_cols(), p.hidden);
    let (mean, sd) = column_moments(m.data(), m.n_rows(), m.n_cols());
    model.input_mean = mean;
    model.input_scale = sd.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    let mut rng = stream(p.seed, streams::MLP_INIT);
    for layer in &mut model.layers {
        let bound = p.init_scale * (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
        for w in &mut layer.w {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(model)
}

/// Trains with minibatch Adam over seeded epoch shuffles.
pub fn fit_mlp(m: &FeatureMatrix, y: &LabelVector, p: &MlpParams) -> Result<MlpModel> {
    if m.n_rows() != y.len() {
        return Err(Error::Length { left: m.n_rows(), right: y.len() });
    }
    y.require_both_classes()?;
    let mut model = init_mlp(m, p)?;
    let mut adam = Adam::new(&model);
    let mut shuffle = stream(p.seed, streams::MLP_SHUFFLE);
    let labels = y.as_slice();
    let mut order: Vec<usize> = (0..m.n_rows()).collect();
    model.loss_history.push(model.loss(m, y));
    for epoch in 1..=p.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(p.batch_size) {
            let grads = model.batch_gradients(m, labels, batch);
            adam.step(&mut model, &grads, p);
        }
        let loss = model.loss(m, y);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("training loss became {loss} in epoch {epoch}")));
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
