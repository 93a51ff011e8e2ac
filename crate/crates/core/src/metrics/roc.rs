use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Curve from `(0, 0)` to `(1, 1)`, one point per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps the threshold down through distinct scores (ties move together)
/// and integrates TPR over FPR with the trapezoid rule.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::shape("roc_curve", positive.len(), scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedAuc("no positive examples"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedAuc("no negative examples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            threshold: s,
            tpr: tp as f64 / n_pos as f64,
            fpr: fp as f64 / n_neg as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    Ok(roc_curve(scores, positive)?.auc)
}

/// Unweighted mean of one-vs-rest AUCs. `proba[i][k]` scores sample `i` for
/// class `k`. Classes absent from `labels` (or present everywhere) have no
/// defined AUC and are left out of the mean.
pub fn macro_ovr_auc(proba: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<f64> {
    if proba.len() != labels.len() {
        return Err(Error::shape("macro_ovr_auc", labels.len(), proba.len()));
    }
    let mut total = 0.0;
    let mut counted = 0;
    for k in 0..n_classes {
        let positive: Vec<bool> = labels.iter().map(|&l| l == k).collect();
        let scores: Vec<f64> = proba
            .iter()
            .map(|p| p.get(k).copied().ok_or_else(|| Error::shape("macro_ovr_auc", n_classes, p.len())))
            .collect::<Result<_>>()?;
        match roc_auc(&scores, &positive) {
            Ok(a) => {
                total += a;
                counted += 1;
            }
            Err(Error::UndefinedAuc(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedAuc("every class is degenerate"));
    }
    Ok(total / counted as f64)
}
