//! `sgt eval`: classification metrics, attributions and PSL for a trained
//! checkpoint on one dataset split.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgt_core::datagen::Split;
use sgt_core::evaluation::{attention_rollout, cls_metrics, gradcam, psl_with_fallback, AttributionMap};
use sgt_core::model::SgtModel;
use sgt_core::saliency::io::{write_heatmap_f64, write_heatmap_pgm};

use crate::train::{load_samples, CONFIG_FILE};
use crate::{io_err, write_json, CliError, ExperimentConfig};

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    /// Defaults to the dataset recorded beside the checkpoint.
    pub dataset: Option<PathBuf>,
    pub split: Option<Split>,
    pub kappa: Option<f64>,
    /// Resolved config the checkpoint is expected to come from.
    pub config: Option<ExperimentConfig>,
    pub allow_mismatch: bool,
    /// Report path; defaults to `report_<split>.json` beside the checkpoint.
    pub out: Option<PathBuf>,
    pub dump_maps: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: usize,
    pub label: usize,
    pub prediction: usize,
    /// Relevant fraction of the patch grid.
    pub u: f64,
    pub r_gradcam: f64,
    pub flagged_gradcam: bool,
    pub zero_mass_gradcam: bool,
    pub r_rollout: f64,
    pub flagged_rollout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// PSL under Grad-CAM maps; `psl_gradcam` repeats it.
    pub psl: f64,
    pub kappa: f64,
    pub n: usize,
    pub split: Split,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `null` when the split holds a single class.
    pub auc: Option<f64>,
    pub psl_gradcam: f64,
    pub psl_rollout: f64,
    /// Grad-CAM maps that were all zero and scored as uniform.
    pub zero_mass_gradcam: usize,
    pub confusion: Vec<Vec<usize>>,
    pub config_hash: Option<String>,
    pub per_sample: Vec<SampleReport>,
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

fn dump(dir: &Path, id: usize, map: &AttributionMap) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = map.to_saliency_map()?;
    write_heatmap_pgm(&dir.join(format!("{id:05}.pgm")), &m)?;
    write_heatmap_f64(&dir.join(format!("{id:05}.f64")), &m)?;
    Ok(())
}

/// Evaluates without masks. Grad-CAM targets the true label.
pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalReport, CliError> {
    let model = SgtModel::load(&opts.checkpoint)?;
    let run_dir = opts.checkpoint.parent().unwrap_or(Path::new("."));
    let recorded_path = run_dir.join(CONFIG_FILE);
    let recorded = if recorded_path.exists() {
        Some(ExperimentConfig::load(&recorded_path)?)
    } else {
        None
    };
    let recorded_hash = recorded.as_ref().map(ExperimentConfig::hash);
    if let Some(given) = &opts.config {
        let given_hash = given.hash();
        if recorded_hash.as_deref() != Some(given_hash.as_str()) && !opts.allow_mismatch {
            return Err(CliError::ConfigMismatch {
                recorded: recorded_hash.unwrap_or_else(|| "nothing".into()),
                given: given_hash,
            });
        }
    }
    let reference = opts.config.as_ref().or(recorded.as_ref());
    let dataset = opts
        .dataset
        .clone()
        .or_else(|| reference.map(|c| c.dataset.clone()))
        .ok_or_else(|| CliError::Config("no dataset given and none recorded beside the checkpoint".into()))?;
    let split = opts.split.or(reference.map(|c| c.eval.split)).unwrap_or(Split::OodTest);
    let kappa = opts.kappa.or(reference.map(|c| c.eval.kappa)).unwrap_or(1.0);

    let cfg = &model.config;
    let samples = load_samples(&dataset, split, cfg)?;
    let per: Vec<(Vec<f64>, AttributionMap, AttributionMap)> = samples
        .par_iter()
        .map(|s| {
            let trace = model.forward(&s.image, None, false, false)?;
            let g = gradcam(cfg, &model.params, &trace, s.label)?;
            let r = attention_rollout(cfg, &trace)?;
            Ok((trace.logit_values().to_vec(), g, r))
        })
        .collect::<Result<_, CliError>>()?;

    let logits: Vec<Vec<f64>> = per.iter().map(|p| p.0.clone()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let relevant: Vec<Vec<usize>> = samples.iter().map(|s| s.relevant_patches.clone()).collect();
    let (gmaps, rmaps): (Vec<_>, Vec<_>) = per.iter().map(|p| (p.1.clone(), p.2.clone())).unzip();
    let metrics = cls_metrics(&logits, &labels, cfg.num_classes)?;
    let pg = psl_with_fallback(&gmaps, &relevant, kappa)?;
    let pr = psl_with_fallback(&rmaps, &relevant, kappa)?;

    if let Some(dir) = &opts.dump_maps {
        for (s, (g, r)) in samples.iter().zip(gmaps.iter().zip(&rmaps)) {
            dump(&dir.join("gradcam"), s.id, g)?;
            dump(&dir.join("rollout"), s.id, r)?;
        }
    }

    let per_sample = samples
        .iter()
        .zip(&logits)
        .zip(pg.per_sample.iter().zip(&pr.per_sample))
        .map(|((s, l), (g, r))| SampleReport {
            id: s.id,
            label: s.label,
            prediction: argmax(l),
            u: g.u,
            r_gradcam: g.r,
            flagged_gradcam: g.flagged,
            zero_mass_gradcam: g.zero_mass,
            r_rollout: r.r,
            flagged_rollout: r.flagged,
        })
        .collect();
    let report = EvalReport {
        psl: pg.psl,
        kappa,
        n: samples.len(),
        split,
        accuracy: metrics.accuracy,
        macro_f1: metrics.macro_f1,
        auc: metrics.auc,
        psl_gradcam: pg.psl,
        psl_rollout: pr.psl,
        zero_mass_gradcam: pg.zero_mass_count(),
        confusion: metrics.confusion,
        config_hash: recorded_hash,
        per_sample,
    };
    let out = opts
        .out
        .clone()
        .unwrap_or_else(|| run_dir.join(format!("report_{}.json", split.name())));
    write_json(&out, &report)?;
    Ok(report)
}
