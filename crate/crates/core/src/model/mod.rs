//! The saliency-guided transformer and its plain ViT baseline.
//!
//! Patch tokens are embedded once (`z0`, positional table included). At
//! `mask_layer` the sequence is cut down to the class token plus the kept
//! patches (or, in zero mode, dropped patches are zeroed). Before the last
//! encoder layer the full `z0` is added back with the evolved kept tokens
//! scattered into their original positions.

mod config;
mod forward;
mod guidance;
mod params;
mod train;

pub use config::{MaskMode, SgtConfig};
pub use forward::{
    bind_params, distill, embed, encoder_layer, forward, head, last_stage, reinject, sidecar_path,
    ForwardTrace, LayerRecord, SgtModel, LN_EPS,
};
pub use guidance::GuidancePolicy;
pub use params::{LayerSlot, ParamIndex, SgtParams};
pub use train::{
    evaluate_logits, train, EpochRecord, TrainConfig, TrainError, TrainItem, TrainOutcome,
};

use thiserror::Error;

use crate::numerics::checkpoint::CheckpointError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("image has {got} values, expected {expected}")]
    ImageSize { expected: usize, got: usize },
    #[error("mask has length {got}, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("this forward pass applies a mask but no mask was given")]
    MissingMask,
    #[error("parameter {name}: {problem}")]
    Params { name: String, problem: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
