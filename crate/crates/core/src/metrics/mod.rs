//! Evaluation: correctness (accuracy, ROC-AUC), similarity (PSNR, SSIM,
//! latent distance), morphometrics, and the gradient-descent baseline that
//! counterfactuals are compared against.

mod morph;
mod opt_baseline;
mod roc;
mod similarity;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use morph::{
    binarize, distance_to_background, morph_errors, morph_measure, otsu_threshold, skeleton_length, zhang_suen, BinaryImage,
    MorphErrors, MorphRecord,
};
pub use opt_baseline::{opt_baseline_ce, OptBaselineConfig, OptBaselineResult};
pub use roc::{macro_ovr_auc, roc_auc, roc_curve, RocCurve, RocPoint};
pub use similarity::{latent_l2, psnr, ssim, SimilarityRecord};

use crate::error::{Error, Result};

/// Fraction of positions where `predicted` equals `target`.
pub fn accuracy(predicted: &[usize], target: &[usize]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::shape("accuracy", target.len(), predicted.len()));
    }
    if predicted.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    let hits = predicted.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// `|measured − reference| / |reference|`.
pub fn abs_rel_error(measured: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((measured - reference).abs() / reference.abs())
}

/// Mean and standard error of the mean over independent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn from_runs(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("runs"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, stderr, n })
    }
}

/// Four decimals, `mean±stderr`.
impl fmt::Display for MeanStderr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_runs: usize,
}

impl MetricRow {
    pub fn from_runs(metric: impl Into<String>, values: &[f64]) -> Result<Self> {
        let s = MeanStderr::from_runs(values)?;
        Ok(Self {
            metric: metric.into(),
            mean: s.mean,
            stderr: s.stderr,
            n_runs: s.n,
        })
    }
}

/// Writes `metric,mean,stderr,n_runs` rows.
pub fn write_report_csv(rows: &[MetricRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "metric,mean,stderr,n_runs")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.metric, r.mean, r.stderr, r.n_runs)?;
    }
    Ok(())
}
