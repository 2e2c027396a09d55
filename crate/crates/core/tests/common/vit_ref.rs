//! Straight-line ViT forward pass over plain vectors, looked up by
//! parameter name. Shares no code with the tape.

use std::collections::HashMap;

use sgt_core::model::{SgtConfig, SgtParams};

type Mat = Vec<Vec<f64>>;

fn mat(data: &[f64], rows: usize, cols: usize) -> Mat {
    (0..rows).map(|r| data[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, x)| x * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn add_bias(a: &mut Mat, b: &[f64]) {
    for row in a.iter_mut() {
        for (x, y) in row.iter_mut().zip(b) {
            *x += y;
        }
    }
}

fn layer_norm(a: &Mat, g: &[f64], b: &[f64]) -> Mat {
    a.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, x)| (x - mu) / (var + 1e-6).sqrt() * g[c] + b[c])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

/// Logits of the plain ViT for a grayscale or interleaved-channel image.
pub fn vit_logits(cfg: &SgtConfig, params: &SgtParams, image: &[f64]) -> Vec<f64> {
    let p: HashMap<&str, &[f64]> = params
        .names()
        .iter()
        .map(String::as_str)
        .zip(params.tensors().iter().map(|t| t.data()))
        .collect();
    let (s, ps, ch, d) = (cfg.image_size, cfg.patch_size, cfg.channels, cfg.embed_dim);
    let g = s / ps;
    let hidden = d * cfg.mlp_ratio;
    let mut patches = Vec::new();
    for gr in 0..g {
        for gc in 0..g {
            let mut v = Vec::new();
            for py in 0..ps {
                for px in 0..ps {
                    for c in 0..ch {
                        v.push(image[((gr * ps + py) * s + gc * ps + px) * ch + c]);
                    }
                }
            }
            patches.push(v);
        }
    }
    let mut tok = mm(&patches, &mat(p["patch_embed.weight"], ps * ps * ch, d));
    add_bias(&mut tok, p["patch_embed.bias"]);
    let mut x = vec![p["cls_token"].to_vec()];
    x.extend(tok);
    let pos = mat(p["pos_embed"], g * g + 1, d);
    for (row, pr) in x.iter_mut().zip(&pos) {
        for (a, b) in row.iter_mut().zip(pr) {
            *a += b;
        }
    }
    let t = x.len();
    let dh = d / cfg.heads;
    for l in 0..cfg.depth {
        let k = |name: &str| p[format!("blocks.{l}.{name}").as_str()];
        let h = layer_norm(&x, k("ln1.gamma"), k("ln1.beta"));
        let mut qkv = mm(&h, &mat(k("attn.qkv.weight"), d, 3 * d));
        add_bias(&mut qkv, k("attn.qkv.bias"));
        let mut o = vec![vec![0.0; d]; t];
        for head in 0..cfg.heads {
            for i in 0..t {
                let scores: Vec<f64> = (0..t)
                    .map(|j| {
                        (0..dh).map(|c| qkv[i][head * dh + c] * qkv[j][d + head * dh + c]).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..dh {
                    o[i][head * dh + c] = (0..t).map(|j| e[j] / z * qkv[j][2 * d + head * dh + c]).sum();
                }
            }
        }
        let mut o = mm(&o, &mat(k("attn.proj.weight"), d, d));
        add_bias(&mut o, k("attn.proj.bias"));
        for (a, b) in x.iter_mut().zip(&o) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
        let h = layer_norm(&x, k("ln2.gamma"), k("ln2.beta"));
        let mut m = mm(&h, &mat(k("mlp.fc1.weight"), d, hidden));
        add_bias(&mut m, k("mlp.fc1.bias"));
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = gelu(*v);
            }
        }
        let mut m = mm(&m, &mat(k("mlp.fc2.weight"), hidden, d));
        add_bias(&mut m, k("mlp.fc2.bias"));
        for (a, b) in x.iter_mut().zip(&m) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
    }
    let cls = layer_norm(&vec![x[0].clone()], p["norm.gamma"], p["norm.beta"]);
    let mut logits = mm(&cls, &mat(p["head.weight"], d, cfg.num_classes));
    add_bias(&mut logits, p["head.bias"]);
    logits.remove(0)
}
