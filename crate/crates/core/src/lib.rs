//! Saliency-guided vision transformer on a self-contained numerical core.
//!
//! * [`numerics`]: tensors, reverse-mode tape, Adam, learning-rate schedule
//! * [`saliency`]: fixation heatmaps, patch-grid pooling, top-M masks, KLD/CC/NSS
//! * [`model`]: the transformer with saliency token distillation and
//!   residual reinjection, random guidance and the training loop
//! * [`evaluation`]: Grad-CAM, attention rollout, the shortcut proxy and
//!   classification metrics
//! * [`datagen`]: the SpurShapes synthetic benchmark and file formats

pub mod numerics;
pub mod saliency;
pub mod datagen;
pub mod model;
pub mod evaluation;
