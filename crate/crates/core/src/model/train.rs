//! Mini-batch training with random saliency guidance.
//!
//! Each sample gets its own tape. Samples are processed in fixed chunks
//! whose gradient sums are added in chunk order, so results do not depend
//! on the number of worker threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::forward::{forward, SgtModel};
use super::{GuidancePolicy, ModelError, SgtParams};
use crate::numerics::{AdamConfig, AdamState, LrSchedule, NumericsError, Tensor};
use crate::saliency::SaliencyMask;

const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub coupled_wd: bool,
    /// Seeds data order and guidance draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            base_lr: 1e-3,
            warmup_epochs: 2,
            weight_decay: 1e-6,
            coupled_wd: false,
            seed: 0,
        }
    }
}

/// One training example. `mask` is required whenever the model masks.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub image: Vec<f64>,
    pub label: usize,
    pub mask: Option<SaliencyMask>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub masked_batch_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub masked_batches: usize,
    pub total_batches: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
        /// Parameters before the failing step.
        last_good: Box<SgtParams>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

struct SampleResult {
    grads: Vec<Tensor>,
    loss: f64,
    correct: bool,
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn sample_step(model: &SgtModel, item: &TrainItem, masked: bool) -> Result<SampleResult, ModelError> {
    let mask = if masked {
        Some(item.mask.as_ref().ok_or(ModelError::MissingMask)?)
    } else {
        None
    };
    let mut trace = forward(&model.config, &model.params, &item.image, mask, true, false)?;
    let correct = argmax(trace.logit_values()) == item.label;
    let loss = trace.tape.cross_entropy(trace.logits, &[item.label])?;
    let loss_value = trace.tape.value(loss).item();
    trace.tape.backward(loss)?;
    let grads = trace
        .params
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| trace.tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok(SampleResult {
        grads,
        loss: loss_value,
        correct,
    })
}

fn add_assign(acc: &mut [Tensor], g: &[Tensor]) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x += y;
        }
    }
}

/// Gradient sum, loss sum and hit count over a batch.
fn batch_grads(
    model: &SgtModel,
    data: &[TrainItem],
    batch: &[usize],
    masked: bool,
) -> Result<(Vec<Tensor>, Vec<f64>, usize), ModelError> {
    let chunks: Vec<_> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sum: Option<Vec<Tensor>> = None;
            let mut losses = Vec::with_capacity(chunk.len());
            let mut hits = 0;
            for &i in chunk {
                let r = sample_step(model, &data[i], masked)?;
                losses.push(r.loss);
                hits += usize::from(r.correct);
                match &mut sum {
                    None => sum = Some(r.grads),
                    Some(s) => add_assign(s, &r.grads),
                }
            }
            Ok((sum.expect("non-empty chunk"), losses, hits))
        })
        .collect::<Result<_, ModelError>>()?;
    let mut iter = chunks.into_iter();
    let (mut total, mut losses, mut hits) = iter.next().expect("non-empty batch");
    for (g, l, h) in iter {
        add_assign(&mut total, &g);
        losses.extend(l);
        hits += h;
    }
    Ok((total, losses, hits))
}

/// Trains `model` in place. `on_epoch` sees each log record as it is made.
pub fn train(
    model: &mut SgtModel,
    data: &[TrainItem],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    model.config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if tc.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
    }
    let steps_per_epoch = data.len().div_ceil(tc.batch_size);
    let schedule = LrSchedule::new(tc.base_lr, tc.warmup_epochs, tc.epochs, steps_per_epoch)?;
    let mut adam = AdamState::new(AdamConfig {
        weight_decay: tc.weight_decay,
        coupled_wd: tc.coupled_wd,
        ..AdamConfig::default()
    });
    let decay = model.params.decay_mask();
    let mut order_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    order_rng.set_stream(1);
    let mut policy = GuidancePolicy::new(model.config.guidance_threshold, tc.seed ^ 0x5347_545f_4755_4944);
    let uses_mask = model.config.uses_mask();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(tc.epochs);
    let (mut masked_total, mut batches_total) = (0, 0);
    let mut step = 0;
    for epoch in 0..tc.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut hits, mut masked_batches) = (0.0, 0, 0);
        let mut lr = 0.0;
        for batch in order.chunks(tc.batch_size) {
            // the draw happens for every batch so the guidance stream does
            // not depend on the mask mode
            let masked = policy.decide() && uses_mask;
            let (mut grads, losses, h) = batch_grads(model, data, batch, masked)?;
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    step,
                    reason: format!("non-finite loss or gradient (batch loss {batch_loss})"),
                    last_good: Box::new(model.params.clone()),
                });
            }
            lr = schedule.lr_at(step)?;
            let mut params: Vec<&mut Tensor> = model.params.tensors_mut().iter_mut().collect();
            adam.step(&mut params, &grads, &decay, lr)?;
            loss_sum += batch_loss;
            hits += h;
            masked_batches += usize::from(masked);
            step += 1;
        }
        masked_total += masked_batches;
        batches_total += steps_per_epoch;
        let rec = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / data.len() as f64,
            train_acc: hits as f64 / data.len() as f64,
            masked_batch_fraction: masked_batches as f64 / steps_per_epoch as f64,
        };
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(TrainOutcome {
        log,
        masked_batches: masked_total,
        total_batches: batches_total,
    })
}

/// Unmasked logits for every image, in order.
pub fn evaluate_logits(model: &SgtModel, images: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
    images.par_iter().map(|img| model.logits(img)).collect()
}
