use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{last_stage, ForwardTrace, SgtConfig, SgtParams};
use crate::numerics::Tensor;
use crate::saliency::SaliencyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradcam,
    Rollout,
}

/// Non-negative relevance per patch, `rows x cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub method: Method,
}

impl AttributionMap {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy summing to one, or `None` for an all-zero map.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let s = self.mass();
        (s > 0.0).then(|| self.values.iter().map(|v| v / s).collect())
    }

    pub fn to_saliency_map(&self) -> Result<SaliencyMap, EvalError> {
        Ok(SaliencyMap::new(self.rows, self.cols, self.values.clone())?)
    }
}

/// Grad-CAM on the tokens entering the last encoder layer. Channel weights
/// are the gradient of the target logit averaged over patch tokens; each
/// patch scores `max(0, Σ_c w_c f_{i,c})`. The class token is left out.
pub fn gradcam(
    cfg: &SgtConfig,
    params: &SgtParams,
    trace: &ForwardTrace,
    target: usize,
) -> Result<AttributionMap, EvalError> {
    if target >= cfg.num_classes {
        return Err(EvalError::TargetClass {
            class: target,
            classes: cfg.num_classes,
        });
    }
    let n = cfg.num_patches();
    let last = trace.last_input();
    if last.positions.len() != n + 1 {
        return Err(EvalError::GradientUnavailable {
            expected: n + 1,
            got: last.positions.len(),
        });
    }
    let features = trace.tape.value(last.input).clone();
    let grad = feature_gradient(cfg, params, &features, target)?;
    Ok(gradcam_from(&features, &grad, cfg.grid_side()))
}

/// `∂ logit[target] / ∂ features` through the last layer and the head.
pub fn feature_gradient(
    cfg: &SgtConfig,
    params: &SgtParams,
    features: &Tensor,
    target: usize,
) -> Result<Tensor, EvalError> {
    let (mut tape, f, logits) = last_stage(cfg, params, features)?;
    let y = tape.select(logits, target)?;
    tape.backward(y)?;
    Ok(tape.grad(f).unwrap_or_else(|| Tensor::zeros(features.shape())))
}

/// The Grad-CAM combination step for `(N + 1) x D` features and gradients.
pub fn gradcam_from(features: &Tensor, grad: &Tensor, side: usize) -> AttributionMap {
    let (rows, d) = features.rows_cols();
    let n = rows - 1;
    let mut w = vec![0.0; d];
    for i in 1..rows {
        for (wc, g) in w.iter_mut().zip(grad.row(i)) {
            *wc += g / n as f64;
        }
    }
    let values = (1..rows)
        .map(|i| {
            let s: f64 = features.row(i).iter().zip(&w).map(|(f, wc)| f * wc).sum();
            s.max(0.0)
        })
        .collect();
    AttributionMap {
        rows: side,
        cols: side,
        values,
        method: Method::Gradcam,
    }
}

/// `Π_l normalize(0.5 Ā_l + 0.5 I)` over the full `N + 1` positions, with
/// later layers multiplied on the left. A distilled layer acts as the
/// identity on the positions it does not carry.
pub fn rollout_matrix(trace: &ForwardTrace, n_tokens: usize) -> Result<Vec<f64>, EvalError> {
    if trace.layers.is_empty() {
        return Err(EvalError::MissingAttention);
    }
    let t = n_tokens;
    let mut r = identity(t);
    for layer in &trace.layers {
        let a = &layer.attention;
        let k = layer.positions.len();
        if a.len() != k * k {
            return Err(EvalError::MissingAttention);
        }
        let mut full = identity(t);
        for (ai, &pi) in layer.positions.iter().enumerate() {
            full[pi * t + pi] = 0.0;
            for (bi, &pj) in layer.positions.iter().enumerate() {
                full[pi * t + pj] = a.data()[ai * k + bi];
            }
        }
        for i in 0..t {
            let row = &mut full[i * t..(i + 1) * t];
            for (j, v) in row.iter_mut().enumerate() {
                *v = 0.5 * *v + if i == j { 0.5 } else { 0.0 };
            }
            let s: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        r = matmul_square(&full, &r, t);
    }
    Ok(r)
}

/// Class-token row of the rollout matrix over the patch columns.
pub fn attention_rollout(cfg: &SgtConfig, trace: &ForwardTrace) -> Result<AttributionMap, EvalError> {
    let t = cfg.num_patches() + 1;
    let r = rollout_matrix(trace, t)?;
    Ok(AttributionMap {
        rows: cfg.grid_side(),
        cols: cfg.grid_side(),
        values: r[1..t].to_vec(),
        method: Method::Rollout,
    })
}

fn identity(t: usize) -> Vec<f64> {
    let mut m = vec![0.0; t * t];
    for i in 0..t {
        m[i * t + i] = 1.0;
    }
    m
}

fn matmul_square(a: &[f64], b: &[f64], t: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * t];
    crate::numerics::gemm(t, t, t, 1.0, a, false, b, false, 0.0, &mut out);
    out
}
