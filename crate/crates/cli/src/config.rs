//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgt_core::datagen::Split;
use sgt_core::model::{SgtConfig, TrainConfig};
use sha2::{Digest, Sha256};

use crate::{read_json, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub split: Split,
    pub kappa: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            split: Split::OodTest,
            kappa: 1.0,
        }
    }
}

/// Values swept by `sgt ablate`. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub guidance_threshold: Vec<f64>,
    pub mask_layer: Vec<usize>,
    pub keep_count: Vec<usize>,
    pub reinjection: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root written by `sgt gen`.
    pub dataset: PathBuf,
    pub model: SgtConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub ablation: AblationGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            model: SgtConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            ablation: AblationGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }

    /// Applies command-line overrides. `--seed` drives both the weight
    /// init and the data order; `--baseline` turns the model into a plain
    /// ViT.
    pub fn resolve(mut self, seed: Option<u64>, baseline: bool) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.model.seed = s;
            self.train.seed = s;
        }
        if baseline {
            self.model = self.model.baseline();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(CliError::Config("epochs and batch_size must be positive".into()));
        }
        if self.train.warmup_epochs >= self.train.epochs {
            return Err(CliError::Config("warmup_epochs must be below epochs".into()));
        }
        if !(self.train.base_lr.is_finite() && self.train.base_lr >= 0.0) {
            return Err(CliError::Config(format!("base_lr {}", self.train.base_lr)));
        }
        if !(self.eval.kappa.is_finite() && self.eval.kappa >= 0.0) {
            return Err(CliError::Config(format!("kappa {}", self.eval.kappa)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain data serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
