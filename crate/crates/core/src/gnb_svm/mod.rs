//! Gaussian Naive Bayes and the RBF one-class SVM.

mod gnb;
mod ocsvm;

pub use gnb::{fit_gnb, GnbModel};
pub use ocsvm::{fit_ocsvm, rbf_kernel, OcsvmModel};
