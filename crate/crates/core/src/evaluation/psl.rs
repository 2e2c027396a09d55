//! Automated proportion-of-shortcut-learning proxy: a sample is flagged
//! when its attribution mass on the relevant patches is no better than
//! `kappa` times what a uniform map would give.

use serde::{Deserialize, Serialize};

use super::{AttributionMap, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PslSample {
    /// Attribution mass on the relevant patches.
    pub r: f64,
    /// Relevant fraction of the grid.
    pub u: f64,
    pub flagged: bool,
    /// The raw map had zero mass and was scored as uniform.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_mass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PslReport {
    pub kappa: f64,
    pub psl: f64,
    pub per_sample: Vec<PslSample>,
}

impl PslReport {
    pub fn zero_mass_count(&self) -> usize {
        self.per_sample.iter().filter(|s| s.zero_mass).count()
    }
}

fn check(maps: &[AttributionMap], relevant: &[Vec<usize>], kappa: f64) -> Result<(), EvalError> {
    if maps.len() != relevant.len() {
        return Err(EvalError::CountMismatch {
            maps: maps.len(),
            relevant: relevant.len(),
        });
    }
    if maps.is_empty() {
        return Err(EvalError::InvalidInput("no samples".into()));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(EvalError::InvalidInput(format!("kappa {kappa}")));
    }
    for (s, (m, rel)) in maps.iter().zip(relevant).enumerate() {
        let n = m.values.len();
        if rel.is_empty() {
            return Err(EvalError::EmptyRelevant(s));
        }
        if let Some(&index) = rel.iter().find(|&&i| i >= n) {
            return Err(EvalError::RelevantOutOfRange { sample: s, index, n });
        }
    }
    Ok(())
}

fn score(normalized: &[f64], rel: &[usize], kappa: f64, zero_mass: bool) -> PslSample {
    let mut seen = vec![false; normalized.len()];
    let mut r = 0.0;
    let mut count = 0;
    for &i in rel {
        if !std::mem::replace(&mut seen[i], true) {
            r += normalized[i];
            count += 1;
        }
    }
    let r = r.clamp(0.0, 1.0);
    let u = count as f64 / normalized.len() as f64;
    PslSample {
        r,
        u,
        flagged: r <= kappa * u,
        zero_mass,
    }
}

fn report(kappa: f64, per_sample: Vec<PslSample>) -> PslReport {
    let psl = per_sample.iter().filter(|s| s.flagged).count() as f64 / per_sample.len() as f64;
    PslReport {
        kappa,
        psl,
        per_sample,
    }
}

/// Strict form: every map must have positive mass.
pub fn psl(maps: &[AttributionMap], relevant: &[Vec<usize>], kappa: f64) -> Result<PslReport, EvalError> {
    check(maps, relevant, kappa)?;
    let mut per_sample = Vec::with_capacity(maps.len());
    for (s, (m, rel)) in maps.iter().zip(relevant).enumerate() {
        let p = m.normalized().ok_or(EvalError::ZeroMass(s))?;
        per_sample.push(score(&p, rel, kappa, false));
    }
    Ok(report(kappa, per_sample))
}

/// Like [`psl`], but an all-zero map (a rectified Grad-CAM with no positive
/// evidence anywhere) is scored as the uniform map and marked.
pub fn psl_with_fallback(
    maps: &[AttributionMap],
    relevant: &[Vec<usize>],
    kappa: f64,
) -> Result<PslReport, EvalError> {
    check(maps, relevant, kappa)?;
    let per_sample = maps
        .iter()
        .zip(relevant)
        .map(|(m, rel)| match m.normalized() {
            Some(p) => score(&p, rel, kappa, false),
            None => {
                let n = m.values.len();
                score(&vec![1.0 / n as f64; n], rel, kappa, true)
            }
        })
        .collect();
    Ok(report(kappa, per_sample))
}
