//! Saliency agreement metrics in the conventions of the MIT saliency
//! benchmark.

use super::{FixationRecord, SaliencyError, SaliencyMap};

/// Regularizer inside the KL divergence.
pub const KLD_EPS: f64 = 1e-7;

fn same_dims(a: &SaliencyMap, b: &SaliencyMap) -> Result<(), SaliencyError> {
    if a.dims() != b.dims() {
        return Err(SaliencyError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// `Σ Q log(ε + Q / (P + ε))` with `P = pred` and `Q = reference`, both
/// normalized to unit mass.
pub fn kld(pred: &SaliencyMap, reference: &SaliencyMap) -> Result<f64, SaliencyError> {
    same_dims(pred, reference)?;
    let p = pred.distribution()?;
    let q = reference.distribution()?;
    Ok(p.values()
        .iter()
        .zip(q.values())
        .map(|(&pi, &qi)| qi * (KLD_EPS + qi / (pi + KLD_EPS)).ln())
        .sum())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation of the flattened maps.
pub fn cc(pred: &SaliencyMap, reference: &SaliencyMap) -> Result<f64, SaliencyError> {
    same_dims(pred, reference)?;
    let (ma, sa) = mean_std(pred.values());
    let (mb, sb) = mean_std(reference.values());
    if sa == 0.0 || sb == 0.0 {
        return Err(SaliencyError::ConstantMap);
    }
    let n = pred.values().len() as f64;
    let cov = pred
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - ma) * (b - mb))
        .sum::<f64>()
        / n;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Mean z-scored prediction at the fixated pixels. Fixations outside the
/// map are ignored.
pub fn nss(pred: &SaliencyMap, fixes: &[FixationRecord]) -> Result<f64, SaliencyError> {
    let (mean, std) = mean_std(pred.values());
    if std == 0.0 {
        return Err(SaliencyError::ConstantMap);
    }
    let (h, w) = pred.dims();
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, c) in fixes.iter().filter_map(|f| f.pixel(h, w)) {
        total += (pred.get(r, c) - mean) / std;
        count += 1;
    }
    if count == 0 {
        return Err(SaliencyError::NoValidFixations);
    }
    Ok(total / count as f64)
}
