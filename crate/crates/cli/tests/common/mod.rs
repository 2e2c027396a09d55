#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sgt_cli::{cmd_gen, ExperimentConfig, GenOptions};
use sgt_core::datagen::SpurSpec;
use sgt_core::model::SgtConfig;
use sha2::{Digest, Sha256};

/// 16x16 images on a 4x4 patch grid.
pub fn tiny_spec(n_train: usize, n_test: usize) -> SpurSpec {
    SpurSpec {
        image_size: 16,
        patch_size: 4,
        size_min: 4.0,
        size_max: 6.0,
        n_train,
        n_iid: n_test,
        n_ood: n_test,
        ..SpurSpec::default()
    }
}

pub fn write_spec(dir: &Path, spec: &SpurSpec) -> PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, serde_json::to_string(spec).unwrap()).unwrap();
    p
}

pub fn gen_dataset(root: &Path, spec: &SpurSpec) -> PathBuf {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = write_spec(tmp.path(), spec);
    cmd_gen(&GenOptions {
        spec: Some(spec_path),
        out: root.to_path_buf(),
        seed: None,
        force: true,
    })
    .unwrap();
    root.to_path_buf()
}

pub fn tiny_experiment(dataset: &Path, epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        dataset: dataset.to_path_buf(),
        model: SgtConfig {
            image_size: 16,
            patch_size: 4,
            embed_dim: 8,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            keep_count: 6,
            ..SgtConfig::default()
        },
        ..ExperimentConfig::default()
    };
    c.train.epochs = epochs;
    c.train.warmup_epochs = 1;
    c.train.batch_size = 8;
    c
}

/// SHA-256 over every file's relative path and bytes, in sorted order.
pub fn tree_digest(root: &Path) -> String {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
