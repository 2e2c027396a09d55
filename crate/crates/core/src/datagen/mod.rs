//! SpurShapes: a synthetic benchmark where the foreground shape decides the
//! label and the background texture is a tunable spurious cue.
//!
//! Each sample is rendered from its own ChaCha stream keyed by
//! `(seed, split, sample id)`, so generation is parallel and reproducible.

pub mod image_io;
mod manifest;
pub mod oracle;
mod render;

pub use manifest::{
    load_dataset_spec, load_split, parse_patch_list, read_manifest, write_dataset, write_manifest,
    write_split, ManifestRow, COVERAGE_THRESHOLD,
};
pub use render::{gaussian_blur, Shape, Texture, FOREGROUND, TEXTURE_FLAT, TEXTURE_HIGH, TEXTURE_LOW};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::saliency::{SaliencyError, SaliencyMap};
use image_io::ImageIoError;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("shape of half-extent {size} cannot fit in a {image_size}px frame")]
    ShapeDoesNotFit { size: f64, image_size: usize },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: ImageIoError,
    },
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    IidTest,
    OodTest,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::IidTest, Split::OodTest];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::IidTest => "iid_test",
            Split::OodTest => "ood_test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::IidTest => 1,
            Split::OodTest => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| DatagenError::InvalidSpec(format!("unknown split {s:?}")))
    }
}

/// Generator parameters. `shapes[k]` is the foreground of class `k` and
/// `textures[k]` the background that co-occurs with it at rate `rho_*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpurSpec {
    pub image_size: usize,
    pub patch_size: usize,
    pub num_classes: usize,
    pub shapes: Vec<Shape>,
    pub textures: Vec<Texture>,
    pub rho_train: f64,
    pub rho_iid: f64,
    pub rho_ood: f64,
    pub n_train: usize,
    pub n_iid: usize,
    pub n_ood: usize,
    pub noise_std: f64,
    /// Half-extent range of the foreground shape in pixels.
    pub size_min: f64,
    pub size_max: f64,
    /// Width of texture stripes and checker cells in pixels.
    pub stripe_width: usize,
    pub seed: u64,
}

impl Default for SpurSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            num_classes: 4,
            shapes: Shape::ALL.to_vec(),
            textures: Texture::ALL.to_vec(),
            rho_train: 1.0,
            rho_iid: 1.0,
            rho_ood: 0.25,
            n_train: 2000,
            n_iid: 500,
            n_ood: 500,
            noise_std: 0.05,
            size_min: 9.0,
            size_max: 13.0,
            stripe_width: 2,
            seed: 0,
        }
    }
}

impl SpurSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidSpec(m));
        let k = self.num_classes;
        if k < 2 {
            return bad(format!("num_classes must be at least 2, got {k}"));
        }
        if k > self.shapes.len() || k > self.textures.len() {
            return bad(format!(
                "num_classes {k} exceeds {} shapes / {} textures",
                self.shapes.len(),
                self.textures.len()
            ));
        }
        for i in 0..k {
            if self.shapes[..i].contains(&self.shapes[i]) || self.textures[..i].contains(&self.textures[i]) {
                return bad(format!("class {i} reuses a shape or texture"));
            }
        }
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "image_size {} is not a multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        for (name, rho) in [("rho_train", self.rho_train), ("rho_iid", self.rho_iid), ("rho_ood", self.rho_ood)] {
            if !(0.0..=1.0).contains(&rho) {
                return bad(format!("{name} = {rho} is not a probability"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std {}", self.noise_std));
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max) {
            return bad(format!("size range [{}, {}]", self.size_min, self.size_max));
        }
        if self.stripe_width == 0 {
            return bad("stripe_width must be positive".into());
        }
        if 2.0 * self.size_max + 2.0 > self.image_size as f64 {
            return Err(DatagenError::ShapeDoesNotFit {
                size: self.size_max,
                image_size: self.image_size,
            });
        }
        Ok(())
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    /// Gaussian width of the oracle saliency blur.
    pub fn saliency_sigma(&self) -> f64 {
        self.patch_size as f64 / 2.0
    }

    pub fn rho(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.rho_train,
            Split::IidTest => self.rho_iid,
            Split::OodTest => self.rho_ood,
        }
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::IidTest => self.n_iid,
            Split::OodTest => self.n_ood,
        }
    }
}

/// One benchmark item. `image` is row-major grayscale on the 8-bit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub label: usize,
    pub background_id: usize,
    pub image: Vec<f64>,
    pub relevant_patches: Vec<usize>,
    pub saliency: SaliencyMap,
}

/// A sample together with its noise-free foreground raster.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub sample: Sample,
    pub foreground: Vec<bool>,
}

pub fn generate(spec: &SpurSpec, split: Split) -> Result<Vec<Sample>, DatagenError> {
    Ok(generate_rendered(spec, split)?.into_iter().map(|r| r.sample).collect())
}

pub fn generate_rendered(spec: &SpurSpec, split: Split) -> Result<Vec<Rendered>, DatagenError> {
    spec.validate()?;
    (0..spec.count(split))
        .into_par_iter()
        .map(|id| render_sample(spec, split, id))
        .collect()
}

fn sample_rng(seed: u64, split: Split, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream() << 40) | id as u64);
    rng
}

/// Renders sample `id` of `split`. Valid specs only.
pub fn render_sample(spec: &SpurSpec, split: Split, id: usize) -> Result<Rendered, DatagenError> {
    let mut rng = sample_rng(spec.seed, split, id);
    let k = spec.num_classes;
    let size = spec.image_size;
    let label = rng.random_range(0..k);
    let background_id = if rng.random::<f64>() < spec.rho(split) {
        label
    } else {
        let b = rng.random_range(0..k - 1);
        if b >= label {
            b + 1
        } else {
            b
        }
    };
    let s = rng.random_range(spec.size_min..=spec.size_max);
    let lo = s + 1.0;
    let hi = size as f64 - s - 1.0;
    let cx = rng.random_range(lo..=hi);
    let cy = rng.random_range(lo..=hi);

    let foreground = spec.shapes[label].rasterize(size, cx, cy, s);
    let mut image = spec.textures[background_id].render(size, spec.stripe_width);
    for (v, &f) in image.iter_mut().zip(&foreground) {
        if f {
            *v = FOREGROUND;
        }
    }
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
        for v in &mut image {
            *v += noise.sample(&mut rng);
        }
    }
    image_io::quantize_in_place(&mut image);

    let relevant_patches = relevant_patches(&foreground, size, spec.patch_size, COVERAGE_THRESHOLD);
    if relevant_patches.is_empty() {
        return Err(DatagenError::InvalidSpec(format!("sample {id} has no relevant patch")));
    }
    let mask: Vec<f64> = foreground.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let saliency =
        SaliencyMap::new(size, size, gaussian_blur(&mask, size, spec.saliency_sigma()))?.max_normalized()?;
    Ok(Rendered {
        sample: Sample {
            id,
            label,
            background_id,
            image,
            relevant_patches,
            saliency,
        },
        foreground,
    })
}

/// Patches whose foreground coverage is at least `threshold`.
pub fn relevant_patches(foreground: &[bool], size: usize, patch: usize, threshold: f64) -> Vec<usize> {
    let g = size / patch;
    let mut counts = vec![0usize; g * g];
    for r in 0..size {
        for c in 0..size {
            if foreground[r * size + c] {
                counts[(r / patch) * g + c / patch] += 1;
            }
        }
    }
    let area = (patch * patch) as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n as f64 / area >= threshold)
        .map(|(i, _)| i)
        .collect()
}
