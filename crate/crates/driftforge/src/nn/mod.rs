//! Minimal dense-network engine: forward/backward with exact gradients
//! (including gradients with respect to inputs), Adam, cross-entropy, and an
//! L1-penalized logistic regression for feature selection.

mod adam;
pub mod gradcheck;
mod lasso;
mod loss;
mod matrix;
mod model;

pub use adam::AdamState;
pub use lasso::l1_logistic_select;
pub use loss::{cross_entropy, malware_scores, softmax};
pub use matrix::Matrix;
pub use model::{
    backward, selu, selu_deriv, ForwardTrace, Gradients, LayerGrads, LayerSpec, MlpModel, Mode,
    BN_EPS, BN_MOMENTUM, SELU_ALPHA, SELU_SCALE,
};

use thiserror::Error;

/// Errors surfaced by the network engine.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("stale forward trace: the model changed between forward and backward")]
    StaleTrace,
    #[error("label {0} out of range for a binary task")]
    LabelOutOfRange(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Stock classifier architectures.
///
/// Full-feature mode stacks ten 512-wide hidden blocks; reduced mode uses
/// four 128-wide blocks. Every hidden block is dense + batchnorm + SELU +
/// dropout. Widths are overridable through the experiment config.
pub fn classifier_specs(input_dim: usize, hidden_widths: &[usize], dropout: f64) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut cur = input_dim;
    for &width in hidden_widths {
        specs.push(LayerSpec::dense(cur, width));
        specs.push(LayerSpec::batchnorm(width));
        specs.push(LayerSpec::Selu);
        specs.push(LayerSpec::Dropout { rate: dropout });
        cur = width;
    }
    specs.push(LayerSpec::dense(cur, 2));
    specs
}

/// Default hidden widths for the full 2381-feature classifier.
pub fn full_mode_widths() -> Vec<usize> {
    vec![512; 10]
}

/// Default hidden widths for the reduced 100-feature classifier.
pub fn reduced_mode_widths() -> Vec<usize> {
    vec![128; 4]
}
