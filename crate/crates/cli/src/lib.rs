//! Reproducible pipeline commands: dataset generation, training,
//! evaluation and ablation sweeps.
//!
//! Every command writes JSON or CSV beside its outputs and nothing that
//! depends on wall-clock time, so reruns with the same seed are
//! byte-identical.

pub mod ablate;
pub mod config;
pub mod eval;
pub mod gen;
pub mod train;

use std::path::{Path, PathBuf};

use sgt_core::datagen::DatagenError;
use sgt_core::evaluation::EvalError;
use sgt_core::model::{ModelError, TrainError};
use sgt_core::saliency::SaliencyError;
use thiserror::Error;

pub use ablate::{cells, cmd_ablate, read_summary, AblateOptions, SummaryRow, SUMMARY_FILE};
pub use config::{AblationGrid, EvalSettings, ExperimentConfig};
pub use eval::{cmd_eval, EvalOptions, EvalReport, SampleReport};
pub use gen::{cmd_gen, GenOptions};
pub use train::{cmd_train, TrainOptions, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("output directory {0} is not empty (pass --force to overwrite)")]
    OutputNotEmpty(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config hash mismatch: checkpoint was trained with {recorded}, given config hashes to {given} (pass --allow-mismatch to override)")]
    ConfigMismatch { recorded: String, given: String },
    #[error("model and dataset disagree: {0}")]
    GridMismatch(String),
    #[error("ablation cell {cell}: {reason}")]
    InvalidCell { cell: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error("summary csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

/// Creates `dir`, refusing a non-empty one unless `force`, in which case it
/// is emptied first.
pub(crate) fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
        if entries.next().is_some() {
            if !force {
                return Err(CliError::OutputNotEmpty(dir.to_path_buf()));
            }
            std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Worker count: `requested`, else the machine's parallelism, capped by
/// `SGT_THREADS` when set.
pub fn worker_count(requested: Option<usize>) -> usize {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(default).max(1);
    if let Some(cap) = std::env::var("SGT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        n = n.min(cap.max(1));
    }
    n
}
