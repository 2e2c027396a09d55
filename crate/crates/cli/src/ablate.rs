//! `sgt ablate`: train and evaluate every cell of a parameter grid.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgt_core::model::EpochRecord;

use crate::eval::{cmd_eval, EvalOptions};
use crate::train::{cmd_train, TrainOptions, CHECKPOINT_FILE};
use crate::{io_err, prepare_out_dir, worker_count, AblationGrid, CliError, ExperimentConfig};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone)]
pub struct AblateOptions {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub force: bool,
    pub jobs: Option<usize>,
    pub kappa: Option<f64>,
}

/// One CSV line: the cell's coordinates and its evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub guidance_threshold: f64,
    pub mask_layer: usize,
    pub keep_count: usize,
    pub reinjection: bool,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub psl_gradcam: f64,
    pub psl_rollout: f64,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Expands the grid in threshold, layer, keep count, reinjection order
/// (the last axis varies fastest). Every cell is validated.
pub fn cells(base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>, CliError> {
    let g = &base.ablation;
    let m = &base.model;
    let mut out = Vec::new();
    for &t in &axis(&g.guidance_threshold, m.guidance_threshold) {
        for &layer in &axis(&g.mask_layer, m.mask_layer) {
            for &keep in &axis(&g.keep_count, m.keep_count) {
                for &re in &axis(&g.reinjection, m.reinjection) {
                    let mut c = base.clone();
                    c.ablation = AblationGrid::default();
                    c.model.guidance_threshold = t;
                    c.model.mask_layer = layer;
                    c.model.keep_count = keep;
                    c.model.reinjection = re;
                    c.validate().map_err(|e| CliError::InvalidCell {
                        cell: out.len(),
                        reason: e.to_string(),
                    })?;
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

pub fn cell_dir(out: &Path, cell: usize) -> PathBuf {
    out.join(format!("cell_{cell:03}"))
}

/// Runs every cell in a bounded worker pool and writes `summary.csv`.
pub fn cmd_ablate(
    opts: &AblateOptions,
    progress: impl Fn(usize, &EpochRecord) + Sync,
) -> Result<Vec<SummaryRow>, CliError> {
    let grid = cells(&opts.config)?;
    prepare_out_dir(&opts.out, opts.force)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(opts.jobs))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SummaryRow> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let dir = cell_dir(&opts.out, i);
                cmd_train(
                    &TrainOptions {
                        config: cfg.clone(),
                        out: dir.clone(),
                        force: true,
                    },
                    |r| progress(i, r),
                )?;
                let report = cmd_eval(&EvalOptions {
                    checkpoint: dir.join(CHECKPOINT_FILE),
                    config: Some(cfg.clone()),
                    kappa: opts.kappa,
                    ..EvalOptions::default()
                })?;
                Ok(SummaryRow {
                    cell: i,
                    guidance_threshold: cfg.model.guidance_threshold,
                    mask_layer: cfg.model.mask_layer,
                    keep_count: cfg.model.keep_count,
                    reinjection: cfg.model.reinjection,
                    accuracy: report.accuracy,
                    auc: report.auc,
                    macro_f1: report.macro_f1,
                    psl_gradcam: report.psl_gradcam,
                    psl_rollout: report.psl_rollout,
                })
            })
            .collect::<Result<_, CliError>>()
    })?;
    let path = opts.out.join(SUMMARY_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
