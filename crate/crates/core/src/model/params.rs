use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, SgtConfig};
use crate::numerics::{checkpoint, init::trunc_normal, Tensor};

const INIT_STD: f64 = 0.02;

/// Per-layer tensors in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSlot {
    Ln1Gamma,
    Ln1Beta,
    QkvWeight,
    QkvBias,
    ProjWeight,
    ProjBias,
    Ln2Gamma,
    Ln2Beta,
    Fc1Weight,
    Fc1Bias,
    Fc2Weight,
    Fc2Bias,
}

impl LayerSlot {
    pub const ALL: [LayerSlot; 12] = [
        LayerSlot::Ln1Gamma,
        LayerSlot::Ln1Beta,
        LayerSlot::QkvWeight,
        LayerSlot::QkvBias,
        LayerSlot::ProjWeight,
        LayerSlot::ProjBias,
        LayerSlot::Ln2Gamma,
        LayerSlot::Ln2Beta,
        LayerSlot::Fc1Weight,
        LayerSlot::Fc1Bias,
        LayerSlot::Fc2Weight,
        LayerSlot::Fc2Bias,
    ];

    fn name(self) -> &'static str {
        match self {
            LayerSlot::Ln1Gamma => "ln1.gamma",
            LayerSlot::Ln1Beta => "ln1.beta",
            LayerSlot::QkvWeight => "attn.qkv.weight",
            LayerSlot::QkvBias => "attn.qkv.bias",
            LayerSlot::ProjWeight => "attn.proj.weight",
            LayerSlot::ProjBias => "attn.proj.bias",
            LayerSlot::Ln2Gamma => "ln2.gamma",
            LayerSlot::Ln2Beta => "ln2.beta",
            LayerSlot::Fc1Weight => "mlp.fc1.weight",
            LayerSlot::Fc1Bias => "mlp.fc1.bias",
            LayerSlot::Fc2Weight => "mlp.fc2.weight",
            LayerSlot::Fc2Bias => "mlp.fc2.bias",
        }
    }

    fn shape(self, d: usize, hidden: usize) -> Vec<usize> {
        match self {
            LayerSlot::QkvWeight => vec![d, 3 * d],
            LayerSlot::QkvBias => vec![3 * d],
            LayerSlot::ProjWeight => vec![d, d],
            LayerSlot::Fc1Weight => vec![d, hidden],
            LayerSlot::Fc1Bias => vec![hidden],
            LayerSlot::Fc2Weight => vec![hidden, d],
            _ => vec![d],
        }
    }
}

/// Positions of the tensors inside [`SgtParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndex {
    depth: usize,
}

impl ParamIndex {
    pub const PATCH_WEIGHT: usize = 0;
    pub const PATCH_BIAS: usize = 1;
    pub const CLS_TOKEN: usize = 2;
    pub const POS_EMBED: usize = 3;
    const LAYERS: usize = 4;

    pub fn new(depth: usize) -> Self {
        Self { depth }
    }

    pub fn layer(&self, l: usize, slot: LayerSlot) -> usize {
        debug_assert!(l < self.depth);
        Self::LAYERS + l * LayerSlot::ALL.len() + slot as usize
    }

    pub fn norm_gamma(&self) -> usize {
        Self::LAYERS + self.depth * LayerSlot::ALL.len()
    }

    pub fn norm_beta(&self) -> usize {
        self.norm_gamma() + 1
    }

    pub fn head_weight(&self) -> usize {
        self.norm_gamma() + 2
    }

    pub fn head_bias(&self) -> usize {
        self.norm_gamma() + 3
    }

    pub fn len(&self) -> usize {
        self.norm_gamma() + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Every learnable tensor of the model in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SgtParams {
    index: ParamIndex,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

fn layout(cfg: &SgtConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.embed_dim;
    let hidden = d * cfg.mlp_ratio;
    let mut out = vec![
        ("patch_embed.weight".to_string(), vec![cfg.patch_dim(), d]),
        ("patch_embed.bias".to_string(), vec![d]),
        ("cls_token".to_string(), vec![1, d]),
        ("pos_embed".to_string(), vec![cfg.num_patches() + 1, d]),
    ];
    for l in 0..cfg.depth {
        for slot in LayerSlot::ALL {
            out.push((format!("blocks.{l}.{}", slot.name()), slot.shape(d, hidden)));
        }
    }
    out.push(("norm.gamma".to_string(), vec![d]));
    out.push(("norm.beta".to_string(), vec![d]));
    out.push(("head.weight".to_string(), vec![d, cfg.num_classes]));
    out.push(("head.bias".to_string(), vec![cfg.num_classes]));
    out
}

impl SgtParams {
    /// Truncated-normal(0, 0.02) weights and positional table, zero biases
    /// and class token, unit layer-norm scales.
    pub fn init(cfg: &SgtConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (names, tensors) = layout(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".gamma") {
                    Tensor::ones(&shape)
                } else if name.ends_with(".weight") || name == "pos_embed" {
                    trunc_normal(&mut rng, &shape, INIT_STD)
                } else {
                    Tensor::zeros(&shape)
                };
                (name, t)
            })
            .unzip();
        Ok(Self {
            index: ParamIndex::new(cfg.depth),
            names,
            tensors,
        })
    }

    /// Checks names and shapes against the config's layout.
    pub fn from_named(cfg: &SgtConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let want = layout(cfg);
        if named.len() != want.len() {
            return Err(ModelError::Params {
                name: "<all>".into(),
                problem: format!("expected {} tensors, found {}", want.len(), named.len()),
            });
        }
        let mut names = Vec::with_capacity(want.len());
        let mut tensors = Vec::with_capacity(want.len());
        for ((name, t), (wname, wshape)) in named.into_iter().zip(want) {
            if name != wname || t.shape() != wshape.as_slice() {
                return Err(ModelError::Params {
                    name,
                    problem: format!("expected {wname} with shape {wshape:?}, found shape {:?}", t.shape()),
                });
            }
            if !t.is_finite() {
                return Err(ModelError::Params {
                    name,
                    problem: "non-finite values".into(),
                });
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            index: ParamIndex::new(cfg.depth),
            names,
            tensors,
        })
    }

    pub fn index(&self) -> ParamIndex {
        self.index
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn layer(&self, l: usize, slot: LayerSlot) -> &Tensor {
        &self.tensors[self.index.layer(l, slot)]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Weight decay applies to everything except biases and layer-norm
    /// affine parameters.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.names
            .iter()
            .map(|n| !(n.ends_with(".bias") || n.ends_with(".gamma") || n.ends_with(".beta")))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        checkpoint::save(path, &self.to_named())?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: &SgtConfig) -> Result<Self, ModelError> {
        Self::from_named(cfg, checkpoint::load(path)?)
    }
}
