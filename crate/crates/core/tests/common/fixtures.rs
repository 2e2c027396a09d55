use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sgt_core::model::{forward, MaskMode, SgtConfig, SgtParams};
use sgt_core::numerics::Tensor;
use sgt_core::saliency::SaliencyMask;

use super::{rel_err, rng};

pub fn tiny_config(image: usize, patch: usize, dim: usize, depth: usize, heads: usize, keep: usize) -> SgtConfig {
    SgtConfig {
        image_size: image,
        patch_size: patch,
        channels: 1,
        embed_dim: dim,
        depth,
        heads,
        mlp_ratio: 2,
        num_classes: 3,
        keep_count: keep,
        mask_mode: MaskMode::Distill,
        reinjection: true,
        mask_layer: 1,
        guidance_threshold: 0.5,
        seed: 0,
    }
}

/// Parameters drawn uniformly from `[-scale, scale]`, layer-norm scales
/// around one, so every nonlinearity is exercised.
pub fn random_params(cfg: &SgtConfig, seed: u64, scale: f64) -> SgtParams {
    let mut r = rng(seed);
    let named = SgtParams::init(cfg)
        .unwrap()
        .to_named()
        .into_iter()
        .map(|(name, t)| {
            let offset = if name.ends_with(".gamma") { 1.0 } else { 0.0 };
            let data = (0..t.len()).map(|_| offset + r.random_range(-scale..scale)).collect();
            (name, Tensor::new(t.shape().to_vec(), data).unwrap())
        })
        .collect();
    SgtParams::from_named(cfg, named).unwrap()
}

pub fn random_image(r: &mut ChaCha8Rng, cfg: &SgtConfig) -> Vec<f64> {
    (0..cfg.image_len()).map(|_| r.random::<f64>()).collect()
}

pub fn random_mask(r: &mut ChaCha8Rng, n: usize, m: usize) -> SaliencyMask {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = r.random_range(i..n);
        idx.swap(i, j);
    }
    SaliencyMask::from_kept(n, &idx[..m]).unwrap()
}

fn loss(cfg: &SgtConfig, params: &SgtParams, image: &[f64], label: usize, mask: Option<&SaliencyMask>) -> f64 {
    let mut tr = forward(cfg, params, image, mask, false, false).unwrap();
    let l = tr.tape.cross_entropy(tr.logits, &[label]).unwrap();
    tr.tape.value(l).item()
}

/// Worst relative error between tape gradients of the cross-entropy and
/// central differences, over every parameter scalar and every pixel.
pub fn model_fd_max_rel_err(
    cfg: &SgtConfig,
    params: &SgtParams,
    image: &[f64],
    label: usize,
    mask: Option<&SaliencyMask>,
    h: f64,
) -> f64 {
    let mut tr = forward(cfg, params, image, mask, true, true).unwrap();
    let l = tr.tape.cross_entropy(tr.logits, &[label]).unwrap();
    tr.tape.backward(l).unwrap();
    let pgrads: Vec<Tensor> = tr
        .params
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| tr.tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let igrad = tr.tape.grad(tr.image).unwrap();

    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for (i, g) in pgrads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = p.get(i).data()[j];
            p.get_mut(i).data_mut()[j] = orig + h;
            let up = loss(cfg, &p, image, label, mask);
            p.get_mut(i).data_mut()[j] = orig - h;
            let down = loss(cfg, &p, image, label, mask);
            p.get_mut(i).data_mut()[j] = orig;
            worst = worst.max(rel_err(g.data()[j], (up - down) / (2.0 * h)));
        }
    }
    let mut img = image.to_vec();
    for j in 0..img.len() {
        let orig = img[j];
        img[j] = orig + h;
        let up = loss(cfg, params, &img, label, mask);
        img[j] = orig - h;
        let down = loss(cfg, params, &img, label, mask);
        img[j] = orig;
        worst = worst.max(rel_err(igrad.data()[j], (up - down) / (2.0 * h)));
    }
    worst
}

/// Central-difference derivative of the loss with respect to one pixel.
pub fn pixel_fd(cfg: &SgtConfig, params: &SgtParams, image: &[f64], label: usize, mask: Option<&SaliencyMask>, j: usize, h: f64) -> f64 {
    let mut img = image.to_vec();
    img[j] += h;
    let up = loss(cfg, params, &img, label, mask);
    img[j] -= 2.0 * h;
    let down = loss(cfg, params, &img, label, mask);
    (up - down) / (2.0 * h)
}
