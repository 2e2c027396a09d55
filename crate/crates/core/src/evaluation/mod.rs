//! Patch-level attribution (Grad-CAM, attention rollout), the automated
//! shortcut-learning proxy and classification metrics.

mod attribution;
mod metrics;
mod psl;

pub use attribution::{attention_rollout, gradcam, rollout_matrix, AttributionMap, Method};
pub use metrics::{cls_metrics, mann_whitney_auc, softmax, ClsMetrics};
pub use psl::{psl, psl_with_fallback, PslReport, PslSample};

use thiserror::Error;

use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::saliency::SaliencyError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("attribution needs all {expected} tokens at the last layer, trace has {got}")]
    GradientUnavailable { expected: usize, got: usize },
    #[error("target class {class} out of range ({classes} classes)")]
    TargetClass { class: usize, classes: usize },
    #[error("trace has no attention record")]
    MissingAttention,
    #[error("sample {0}: relevant set is empty")]
    EmptyRelevant(usize),
    #[error("sample {sample}: relevant index {index} out of range for {n} patches")]
    RelevantOutOfRange { sample: usize, index: usize, n: usize },
    #[error("sample {0}: attribution map has zero mass")]
    ZeroMass(usize),
    #[error("{maps} maps but {relevant} relevant sets")]
    CountMismatch { maps: usize, relevant: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
}
