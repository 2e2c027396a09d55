use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Macro one-vs-rest AUC; absent when fewer than two classes occur in
    /// the labels.
    pub auc: Option<f64>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks.
pub fn mann_whitney_auc(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Accuracy, macro-F1 over `num_classes` classes and macro one-vs-rest AUC
/// on softmax scores.
pub fn cls_metrics(logits: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<ClsMetrics, EvalError> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(EvalError::InvalidInput(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.iter().any(|l| l.len() != num_classes) || labels.iter().any(|&y| y >= num_classes) {
        return Err(EvalError::InvalidInput(format!("expected {num_classes} classes")));
    }
    let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (l, &y) in logits.iter().zip(labels) {
        let pred = (0..num_classes).fold(0, |b, i| if l[i] > l[b] { i } else { b });
        confusion[y][pred] += 1;
    }
    let n = labels.len() as f64;
    let accuracy = (0..num_classes).map(|k| confusion[k][k]).sum::<usize>() as f64 / n;
    let macro_f1 = (0..num_classes)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let denom = support as f64 + predicted as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum::<f64>()
        / num_classes as f64;
    let aucs: Vec<f64> = (0..num_classes)
        .filter_map(|k| {
            let (pos, neg): (Vec<_>, Vec<_>) = probs.iter().zip(labels).partition(|(_, &y)| y == k);
            let pos: Vec<f64> = pos.iter().map(|(p, _)| p[k]).collect();
            let neg: Vec<f64> = neg.iter().map(|(p, _)| p[k]).collect();
            mann_whitney_auc(&pos, &neg)
        })
        .collect();
    let auc = (aucs.len() >= 2 || (aucs.len() == 1 && num_classes == 2))
        .then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(ClsMetrics {
        accuracy,
        macro_f1,
        auc,
        confusion,
    })
}
