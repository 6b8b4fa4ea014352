//! One interface over every learner: a serializable [`ModelSpec`] fits into a
//! [`FittedModel`] that scores rows and turns scores into hard labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{fit_gbt, GbtModel, GbtParams};
use crate::gnb_svm::{fit_gnb, fit_ocsvm, GnbModel, OcsvmModel};
use crate::ingest::{FeatureMatrix, LabelVector};
use crate::linear_models::{fit_lasso, fit_logistic, fit_ridge, threshold_labels, LinearModel};
use crate::mlp::{fit_mlp, MlpModel, MlpParams};
use crate::rng::{sample_without_replacement, stream, streams};

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

fn default_var_smoothing() -> f64 {
    1e-9
}

fn default_gamma() -> f64 {
    1e-9
}

fn default_nu() -> f64 {
    0.5
}

fn default_max_train_rows() -> usize {
    2000
}

/// A model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Lasso {
        alpha: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Ridge {
        alpha: f64,
    },
    Logistic {
        #[serde(default)]
        l2: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Gnb {
        #[serde(default = "default_var_smoothing")]
        var_smoothing: f64,
    },
    /// Trained on Survival rows only; outliers are predicted deaths.
    Ocsvm {
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        /// Survival rows are uniformly subsampled down to this count.
        #[serde(default = "default_max_train_rows")]
        max_train_rows: usize,
    },
    Gbt(GbtParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Lasso { .. } => "lasso",
            ModelSpec::Ridge { .. } => "ridge",
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::Gnb { .. } => "gnb",
            ModelSpec::Ocsvm { .. } => "ocsvm",
            ModelSpec::Gbt(_) => "gbt",
            ModelSpec::Mlp(_) => "mlp",
        }
    }

    /// Every family at its default hyperparameters, in reporting order.
    pub fn defaults() -> Vec<ModelSpec> {
        vec![
            ModelSpec::Lasso { alpha: 1e-3, tol: default_tol(), max_iter: default_max_iter() },
            ModelSpec::Ridge { alpha: 1.0 },
            ModelSpec::Logistic { l2: 1.0, tol: default_tol(), max_iter: default_max_iter() },
            ModelSpec::Gnb { var_smoothing: default_var_smoothing() },
            ModelSpec::Ocsvm {
                gamma: default_gamma(),
                nu: default_nu(),
                tol: default_tol(),
                max_iter: default_max_iter(),
                max_train_rows: default_max_train_rows(),
            },
            ModelSpec::Gbt(GbtParams::default()),
            ModelSpec::Mlp(MlpParams::default()),
        ]
    }

    /// Copies this model spec with `seed` placed in the families that draw random
    /// numbers.
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::Gbt(p) => p.seed = seed,
            ModelSpec::Mlp(p) => p.seed = seed,
            _ => {}
        }
        s
    }

    /// Fits on `(m, y)`. `seed` drives any sampling the family does itself
    /// (the one-class subsample); learners with their own seed field use it.
    pub fn fit(&self, m: &FeatureMatrix, y: &LabelVector, seed: u64) -> Result<FittedModel> {
        Ok(match self {
            ModelSpec::Lasso { alpha, tol, max_iter } => FittedModel::Linear(fit_lasso(m, y, *alpha, *tol, *max_iter)?),
            ModelSpec::Ridge { alpha } => FittedModel::Linear(fit_ridge(m, y, *alpha)?),
            ModelSpec::Logistic { l2, tol, max_iter } => FittedModel::Linear(fit_logistic(m, y, *l2, *tol, *max_iter)?),
            ModelSpec::Gnb { var_smoothing } => FittedModel::Gnb(fit_gnb(m, y, *var_smoothing)?),
            ModelSpec::Ocsvm { gamma, nu, tol, max_iter, max_train_rows } => {
                if m.n_rows() != y.len() {
                    return Err(Error::Length { left: m.n_rows(), right: y.len() });
                }
                let survivors: Vec<usize> = (0..y.len()).filter(|&i| y.as_slice()[i] == 0).collect();
                let keep = if survivors.len() > *max_train_rows {
                    let mut rng = stream(seed, streams::OCSVM_ROWS);
                    sample_without_replacement(&mut rng, survivors.len(), *max_train_rows)
                        .into_iter()
                        .map(|k| survivors[k])
                        .collect()
                } else {
                    survivors
                };
                FittedModel::Ocsvm(fit_ocsvm(&m.select_rows(&keep), *gamma, *nu, *tol, *max_iter)?)
            }
            ModelSpec::Gbt(p) => FittedModel::Gbt(fit_gbt(m, y, p)?),
            ModelSpec::Mlp(p) => FittedModel::Mlp(fit_mlp(m, y, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Linear(LinearModel),
    Gnb(GnbModel),
    Ocsvm(OcsvmModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
}

impl FittedModel {
    /// Risk scores: larger means more likely NotSurvival.
    pub fn score(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            FittedModel::Linear(x) => x.score(m),
            FittedModel::Gnb(x) => x.score(m),
            FittedModel::Ocsvm(x) => x.score(m),
            FittedModel::Gbt(x) => x.score(m),
            FittedModel::Mlp(x) => x.forward(m),
        }
    }

    /// Hard labels from scores. The one-class model flags `f(x) < 0`, which
    /// is a risk score strictly above zero, and ignores `threshold`; every
    /// other family flags `score ≥ threshold`.
    pub fn labels(&self, scores: &[f64], threshold: f64) -> LabelVector {
        match self {
            FittedModel::Ocsvm(_) => LabelVector::from(scores.iter().map(|&s| u8::from(s > 0.0)).collect::<Vec<_>>()),
            _ => threshold_labels(scores, threshold),
        }
    }

    /// The threshold actually applied by [`FittedModel::labels`].
    pub fn effective_threshold(&self, threshold: f64) -> f64 {
        match self {
            FittedModel::Ocsvm(_) => 0.0,
            _ => threshold,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Linear(x) => x.converged,
            FittedModel::Ocsvm(x) => x.converged,
            FittedModel::Gbt(x) => !x.degenerate,
            FittedModel::Gnb(_) | FittedModel::Mlp(_) => true,
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            FittedModel::Linear(x) => x.to_text(),
            FittedModel::Gnb(x) => x.to_text(),
            FittedModel::Ocsvm(x) => x.to_text(),
            FittedModel::Gbt(x) => x.to_text(),
            FittedModel::Mlp(x) => x.to_text(),
        }
    }
}
