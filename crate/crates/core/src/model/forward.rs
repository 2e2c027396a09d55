use std::path::Path;

use super::params::{LayerSlot, ParamIndex};
use super::{MaskMode, ModelError, SgtConfig, SgtParams};
use crate::numerics::{Tape, Tensor, Var};
use crate::saliency::SaliencyMask;

/// Layer-norm epsilon used throughout the network.
pub const LN_EPS: f64 = 1e-6;

/// What one encoder layer saw.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    /// Original sequence position of each input token: 0 is the class token,
    /// `i + 1` is patch `i`.
    pub positions: Vec<usize>,
    /// The input token states.
    pub input: Var,
    /// Head-averaged attention, tokens x tokens.
    pub attention: Tensor,
}

/// A recorded forward pass. The tape stays alive so gradients can be taken
/// after the fact.
#[derive(Debug)]
pub struct ForwardTrace {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub image: Var,
    /// Embedded sequence before any masking, `(N + 1) x D`.
    pub z0: Var,
    /// Whether a saliency mask acted on this pass.
    pub masked: bool,
    /// Kept patch indices, increasing. All patches when unmasked.
    pub kept: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    /// Logits, `1 x num_classes`.
    pub logits: Var,
}

impl ForwardTrace {
    /// Input to the last encoder layer (after reinjection when enabled).
    pub fn last_input(&self) -> &LayerRecord {
        self.layers.last().expect("depth >= 1")
    }

    pub fn logit_values(&self) -> &[f64] {
        self.tape.value(self.logits).data()
    }

    /// Token count entering each layer.
    pub fn token_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.positions.len()).collect()
    }
}

/// Puts every parameter on the tape, as gradient-tracked leaves when
/// `trainable`.
pub fn bind_params(tape: &mut Tape, params: &SgtParams, trainable: bool) -> Vec<Var> {
    params
        .tensors()
        .iter()
        .map(|t| tape.leaf(t.clone(), trainable))
        .collect()
}

/// Patch projection, class token and positional table: `(N + 1) x D`.
pub fn embed(tape: &mut Tape, pv: &[Var], cfg: &SgtConfig, image: Var) -> Result<Var, ModelError> {
    let patches = tape.patchify(image, cfg.patch_size)?;
    let tokens = tape.matmul(patches, pv[ParamIndex::PATCH_WEIGHT])?;
    let tokens = tape.add_row(tokens, pv[ParamIndex::PATCH_BIAS])?;
    let z = tape.concat_rows(&[pv[ParamIndex::CLS_TOKEN], tokens])?;
    Ok(tape.add(z, pv[ParamIndex::POS_EMBED])?)
}

/// Applies `mask` to a sequence whose row 0 is the class token.
pub fn distill(tape: &mut Tape, z: Var, mask: &SaliencyMask, mode: MaskMode) -> Result<Var, ModelError> {
    let (rows, cols) = tape.value(z).rows_cols();
    if mask.len() + 1 != rows {
        return Err(ModelError::MaskLength {
            expected: rows - 1,
            got: mask.len(),
        });
    }
    match mode {
        MaskMode::Distill => {
            let idx: Vec<usize> = std::iter::once(0).chain(mask.kept_indices().iter().map(|i| i + 1)).collect();
            Ok(tape.gather_rows(z, &idx)?)
        }
        MaskMode::Zero => {
            let mut keep = vec![1.0; rows * cols];
            for (i, &b) in mask.bits().iter().enumerate() {
                if !b {
                    keep[(i + 1) * cols..(i + 2) * cols].fill(0.0);
                }
            }
            let keep = tape.constant(Tensor::new(vec![rows, cols], keep)?);
            Ok(tape.mul(z, keep)?)
        }
        MaskMode::Off => Ok(z),
    }
}

/// Adds `z0` back under the evolved tokens. `evolved` carries either the
/// class token plus the kept patches in order (`distilled`) or the full
/// sequence. The class row is the evolved class token alone; patch row `i`
/// is `z0[i + 1]` plus the evolved token when `i` is kept.
pub fn reinject(
    tape: &mut Tape,
    z0: Var,
    evolved: Var,
    kept: &[usize],
    distilled: bool,
) -> Result<Var, ModelError> {
    let (rows, cols) = tape.value(z0).rows_cols();
    let erows = tape.value(evolved).rows_cols().0;
    let expected = if distilled { kept.len() + 1 } else { rows };
    if erows != expected || kept.iter().any(|&i| i + 1 >= rows) {
        return Err(ModelError::MaskLength {
            expected,
            got: erows,
        });
    }
    let dst: Vec<usize> = std::iter::once(0).chain(kept.iter().map(|i| i + 1)).collect();
    let src = if distilled { evolved } else { tape.gather_rows(evolved, &dst)? };
    let placed = tape.scatter_rows(src, &dst, rows)?;
    let mut patch_rows = vec![1.0; rows * cols];
    patch_rows[..cols].fill(0.0);
    let patch_rows = tape.constant(Tensor::new(vec![rows, cols], patch_rows)?);
    let base = tape.mul(z0, patch_rows)?;
    Ok(tape.add(base, placed)?)
}

/// Pre-norm transformer block. Returns the output tokens and the
/// head-averaged attention matrix.
pub fn encoder_layer(
    tape: &mut Tape,
    pv: &[Var],
    index: ParamIndex,
    layer: usize,
    cfg: &SgtConfig,
    x: Var,
) -> Result<(Var, Tensor), ModelError> {
    let p = |slot| pv[index.layer(layer, slot)];
    let d = cfg.embed_dim;
    let dh = cfg.head_dim();
    let tokens = tape.value(x).rows_cols().0;

    let h = tape.layer_norm(x, p(LayerSlot::Ln1Gamma), p(LayerSlot::Ln1Beta), LN_EPS)?;
    let qkv = tape.matmul(h, p(LayerSlot::QkvWeight))?;
    let qkv = tape.add_row(qkv, p(LayerSlot::QkvBias))?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut avg = vec![0.0; tokens * tokens];
    for j in 0..cfg.heads {
        let q = tape.slice_cols(qkv, j * dh, dh)?;
        let k = tape.slice_cols(qkv, d + j * dh, dh)?;
        let v = tape.slice_cols(qkv, 2 * d + j * dh, dh)?;
        let s = tape.matmul_nt(q, k)?;
        let s = tape.scale(s, scale);
        let a = tape.softmax(s)?;
        for (acc, w) in avg.iter_mut().zip(tape.value(a).data()) {
            *acc += w / cfg.heads as f64;
        }
        heads.push(tape.matmul(a, v)?);
    }
    let o = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    let o = tape.matmul(o, p(LayerSlot::ProjWeight))?;
    let o = tape.add_row(o, p(LayerSlot::ProjBias))?;
    let x = tape.add(x, o)?;

    let h = tape.layer_norm(x, p(LayerSlot::Ln2Gamma), p(LayerSlot::Ln2Beta), LN_EPS)?;
    let m = tape.matmul(h, p(LayerSlot::Fc1Weight))?;
    let m = tape.add_row(m, p(LayerSlot::Fc1Bias))?;
    let m = tape.gelu(m);
    let m = tape.matmul(m, p(LayerSlot::Fc2Weight))?;
    let m = tape.add_row(m, p(LayerSlot::Fc2Bias))?;
    let out = tape.add(x, m)?;
    Ok((out, Tensor::new(vec![tokens, tokens], avg)?))
}

/// Final layer norm on the class token and the linear head.
pub fn head(tape: &mut Tape, pv: &[Var], index: ParamIndex, x: Var) -> Result<Var, ModelError> {
    let cls = tape.gather_rows(x, &[0])?;
    let cls = tape.layer_norm(cls, pv[index.norm_gamma()], pv[index.norm_beta()], LN_EPS)?;
    let logits = tape.matmul(cls, pv[index.head_weight()])?;
    Ok(tape.add_row(logits, pv[index.head_bias()])?)
}

/// Model state plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct SgtModel {
    pub config: SgtConfig,
    pub params: SgtParams,
}

impl SgtModel {
    pub fn new(config: SgtConfig) -> Result<Self, ModelError> {
        let params = SgtParams::init(&config)?;
        Ok(Self { config, params })
    }

    /// Runs the network on one image. The mask is applied iff it is given
    /// and the mask mode is not `off`; evaluation passes `None`.
    pub fn forward(
        &self,
        image: &[f64],
        mask: Option<&SaliencyMask>,
        track_params: bool,
        track_image: bool,
    ) -> Result<ForwardTrace, ModelError> {
        forward(&self.config, &self.params, image, mask, track_params, track_image)
    }

    pub fn logits(&self, image: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(image, None, false, false)?.logit_values().to_vec())
    }

    /// Writes the checkpoint and a JSON config sidecar next to it.
    pub fn save(&self, ckpt: &Path) -> Result<(), ModelError> {
        self.params.save(ckpt)?;
        std::fs::write(sidecar_path(ckpt), serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }

    pub fn load(ckpt: &Path) -> Result<Self, ModelError> {
        let config: SgtConfig = serde_json::from_str(&std::fs::read_to_string(sidecar_path(ckpt))?)?;
        let params = SgtParams::load(ckpt, &config)?;
        Ok(Self { config, params })
    }
}

/// `model.ckpt` → `model.ckpt.json`.
pub fn sidecar_path(ckpt: &Path) -> std::path::PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn forward(
    cfg: &SgtConfig,
    params: &SgtParams,
    image: &[f64],
    mask: Option<&SaliencyMask>,
    track_params: bool,
    track_image: bool,
) -> Result<ForwardTrace, ModelError> {
    if image.len() != cfg.image_len() {
        return Err(ModelError::ImageSize {
            expected: cfg.image_len(),
            got: image.len(),
        });
    }
    let n = cfg.num_patches();
    let mask = match mask {
        Some(m) if cfg.mask_mode != MaskMode::Off => {
            if m.len() != n {
                return Err(ModelError::MaskLength {
                    expected: n,
                    got: m.len(),
                });
            }
            Some(m)
        }
        _ => None,
    };
    let mut tape = Tape::new();
    let pv = bind_params(&mut tape, params, track_params);
    let index = params.index();
    let image = tape.leaf(Tensor::new(cfg.image_shape(), image.to_vec())?, track_image);
    let z0 = embed(&mut tape, &pv, cfg, image)?;

    let all: Vec<usize> = (0..n).collect();
    let kept = mask.map_or(all.clone(), |m| m.kept_indices().to_vec());
    let distilled = mask.is_some() && cfg.mask_mode == MaskMode::Distill;
    let mut positions: Vec<usize> = (0..=n).collect();
    let mut x = z0;
    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        if let (Some(m), true) = (mask, l + 1 == cfg.mask_layer) {
            x = distill(&mut tape, x, m, cfg.mask_mode)?;
            if distilled {
                positions = std::iter::once(0).chain(kept.iter().map(|i| i + 1)).collect();
            }
        }
        if cfg.reinjection && l + 1 == cfg.depth {
            x = reinject(&mut tape, z0, x, &kept, distilled)?;
            positions = (0..=n).collect();
        }
        let input = x;
        let (out, attention) = encoder_layer(&mut tape, &pv, index, l, cfg, x)?;
        layers.push(LayerRecord {
            positions: positions.clone(),
            input,
            attention,
        });
        x = out;
    }
    let logits = head(&mut tape, &pv, index, x)?;
    Ok(ForwardTrace {
        tape,
        params: pv,
        image,
        z0,
        masked: mask.is_some(),
        kept,
        layers,
        logits,
    })
}

/// Runs the last encoder layer and the head on `features`, a fresh
/// gradient-tracked copy of the last layer's input. Used for Grad-CAM.
pub fn last_stage(
    cfg: &SgtConfig,
    params: &SgtParams,
    features: &Tensor,
) -> Result<(Tape, Var, Var), ModelError> {
    let mut tape = Tape::new();
    let pv = bind_params(&mut tape, params, false);
    let f = tape.leaf(features.clone(), true);
    let (out, _) = encoder_layer(&mut tape, &pv, params.index(), cfg.depth - 1, cfg, f)?;
    let logits = head(&mut tape, &pv, params.index(), out)?;
    Ok((tape, f, logits))
}
