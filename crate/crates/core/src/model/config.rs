use serde::{Deserialize, Serialize};

use super::ModelError;

/// How the saliency mask acts on the token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Keep only the class token and the selected patch tokens.
    Distill,
    /// Keep the full sequence but zero the dropped patch tokens.
    Zero,
    /// Never mask.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgtConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub keep_count: usize,
    pub mask_mode: MaskMode,
    pub reinjection: bool,
    /// 1-based index of the first encoder layer that sees the masked
    /// sequence.
    pub mask_layer: usize,
    pub guidance_threshold: f64,
    pub seed: u64,
}

impl Default for SgtConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            channels: 1,
            embed_dim: 64,
            depth: 6,
            heads: 4,
            mlp_ratio: 4,
            num_classes: 4,
            keep_count: 16,
            mask_mode: MaskMode::Distill,
            reinjection: true,
            mask_layer: 1,
            guidance_threshold: 0.5,
            seed: 0,
        }
    }
}

impl SgtConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.channels == 0 || self.embed_dim == 0 || self.mlp_ratio == 0 {
            return bad("channels, embed_dim and mlp_ratio must be positive".into());
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        let n = self.num_patches();
        if self.keep_count == 0 || self.keep_count > n {
            return bad(format!("keep_count {} outside 1..={n}", self.keep_count));
        }
        if self.mask_layer == 0 || self.mask_layer > self.depth {
            return bad(format!("mask_layer {} outside 1..={}", self.mask_layer, self.depth));
        }
        if !(0.0..=1.0).contains(&self.guidance_threshold) {
            return bad(format!("guidance_threshold {} outside [0, 1]", self.guidance_threshold));
        }
        Ok(())
    }

    /// The vanilla ViT with the same shape: no mask, no reinjection.
    pub fn baseline(&self) -> Self {
        Self {
            mask_mode: MaskMode::Off,
            reinjection: false,
            ..self.clone()
        }
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn image_len(&self) -> usize {
        self.image_size * self.image_size * self.channels
    }

    pub fn image_shape(&self) -> Vec<usize> {
        if self.channels == 1 {
            vec![self.image_size, self.image_size]
        } else {
            vec![self.image_size, self.image_size, self.channels]
        }
    }

    /// Whether training ever applies a saliency mask.
    pub fn uses_mask(&self) -> bool {
        self.mask_mode != MaskMode::Off
    }
}
