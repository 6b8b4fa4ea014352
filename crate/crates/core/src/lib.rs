//! Imbalanced binary classification for birth-record mortality risk.
//!
//! The crate covers the whole pipeline: schema-driven CSV ingestion with
//! train-only imputation, majority undersampling, seven learners behind one
//! [`model::ModelSpec`] interface, minority-class evaluation with stratified
//! recall tables, gain-based feature importance, and a synthetic generator
//! with a known ground-truth risk for verification.
//!
//! Label convention everywhere: `1` = NotSurvival (minority), `0` = Survival.

pub mod domain;
pub mod error;
pub mod experiments;
pub mod gbt;
pub mod gnb_svm;
pub mod ingest;
pub mod linalg;
pub mod linear_models;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
