//! `sgt train`: fit one model and write its checkpoint and log.

use std::io::Write;
use std::path::{Path, PathBuf};

use sgt_core::datagen::{load_dataset_spec, load_split, Sample, Split, SpurSpec};
use sgt_core::model::{train, EpochRecord, SgtConfig, SgtModel, TrainItem, TrainOutcome};
use sgt_core::saliency::{pool_to_grid, top_m_mask};

use crate::{io_err, prepare_out_dir, write_json, CliError, ExperimentConfig};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Already resolved against `--seed` / `--baseline`.
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub force: bool,
}

/// The dataset must produce images and labels the model can take.
pub(crate) fn check_compatible(model: &SgtConfig, spec: &SpurSpec) -> Result<(), CliError> {
    let mut bad = Vec::new();
    if model.image_size != spec.image_size {
        bad.push(format!("image size {} vs {}", model.image_size, spec.image_size));
    }
    if model.patch_size != spec.patch_size {
        bad.push(format!("patch size {} vs {}", model.patch_size, spec.patch_size));
    }
    if model.num_classes != spec.num_classes {
        bad.push(format!("{} classes vs {}", model.num_classes, spec.num_classes));
    }
    if model.channels != 1 {
        bad.push(format!("{} channels vs grayscale", model.channels));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::GridMismatch(bad.join(", ")))
    }
}

/// Attaches the top-`keep_count` mask of each sample's pooled oracle
/// saliency when the model uses masks.
pub fn training_items(model: &SgtConfig, samples: &[Sample]) -> Result<Vec<TrainItem>, CliError> {
    let g = model.grid_side();
    samples
        .iter()
        .map(|s| {
            let mask = if model.uses_mask() {
                Some(top_m_mask(&pool_to_grid(&s.saliency, g, g)?, model.keep_count)?)
            } else {
                None
            };
            Ok(TrainItem {
                image: s.image.clone(),
                label: s.label,
                mask,
            })
        })
        .collect()
}

pub(crate) fn load_samples(root: &Path, split: Split, model: &SgtConfig) -> Result<Vec<Sample>, CliError> {
    let spec = load_dataset_spec(root)?;
    check_compatible(model, &spec)?;
    Ok(load_split(root, split, &spec)?)
}

/// Trains on the dataset's train split and writes `model.ckpt` (plus its
/// architecture sidecar), the resolved `config.json` and one JSON line per
/// epoch in `train_log.jsonl`.
pub fn cmd_train(opts: &TrainOptions, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome, CliError> {
    let cfg = &opts.config;
    cfg.validate()?;
    let samples = load_samples(&cfg.dataset, Split::Train, &cfg.model)?;
    let items = training_items(&cfg.model, &samples)?;
    prepare_out_dir(&opts.out, opts.force)?;
    write_json(&opts.out.join(CONFIG_FILE), cfg)?;

    let mut model = SgtModel::new(cfg.model.clone())?;
    let outcome = train(&mut model, &items, &cfg.train, |r| on_epoch(r))?;
    model.save(&opts.out.join(CHECKPOINT_FILE))?;

    let log_path = opts.out.join(LOG_FILE);
    let mut log = Vec::new();
    for r in &outcome.log {
        serde_json::to_writer(&mut log, r).expect("plain data serializes");
        log.push(b'\n');
    }
    std::fs::File::create(&log_path)
        .and_then(|mut f| f.write_all(&log))
        .map_err(io_err(&log_path))?;
    Ok(outcome)
}
