//! Gradient-descent counterfactuals in latent space: minimise
//! `CE(f(g(z')), target) + λ · MSE(g(z), g(z'))` over `z'` starting at the
//! encoding `z` of the input.

use serde::{Deserialize, Serialize};

use crate::codec::GenerativeCodec;
use crate::error::{Error, Result};
use crate::oracle::{softmax, LocalClassifier};
use crate::scalar::Scalar;
use crate::tensor::{Adam, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptBaselineConfig {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for OptBaselineConfig {
    /// λ = 0.0006, Adam at lr 0.2 for 1000 steps.
    fn default() -> Self {
        Self {
            lambda: 0.0006,
            lr: 0.2,
            epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptBaselineResult<T> {
    pub x_ce: Matrix<T>,
    pub z_ce: Matrix<T>,
    /// Classifier labels of `x_ce`.
    pub labels: Vec<usize>,
}

/// Optimises every row independently. Per-row losses are summed rather than
/// averaged, so a row's trajectory does not depend on the rest of the batch.
pub fn opt_baseline_ce<T, C>(
    x: &Matrix<T>,
    targets: &[usize],
    codec: &C,
    classifier: &LocalClassifier<T>,
    config: &OptBaselineConfig,
) -> Result<OptBaselineResult<T>>
where
    T: Scalar,
    C: GenerativeCodec<T> + ?Sized,
{
    if targets.len() != x.rows() {
        return Err(Error::shape("opt_baseline_ce", x.rows(), targets.len()));
    }
    let n_classes = classifier.net.output_dim();
    if let Some(&bad) = targets.iter().find(|&&t| t >= n_classes) {
        return Err(Error::LabelRange { label: bad, n_classes });
    }
    if !(config.lambda >= 0.0 && config.lr > 0.0) {
        return Err(Error::Config("opt baseline needs lambda >= 0 and lr > 0".into()));
    }
    let z = codec.encode(x)?;
    let x_ref = codec.decode(&z)?;
    let mut z_ce = z.clone();
    let mut adam = Adam::new(T::lit(config.lr));
    let dist_scale = T::lit(2.0 * config.lambda / x_ref.cols() as f64);
    for _ in 0..config.epochs {
        let x_ce = codec.decode(&z_ce)?;
        let mut dlogits = softmax(&classifier.logits(&x_ce)?);
        for (r, &t) in targets.iter().enumerate() {
            dlogits.row_mut(r)[t] -= T::one();
        }
        let (_, mut dx) = classifier.net.backward(&x_ce, &dlogits)?;
        let diff = x_ce.zip_map(&x_ref, |a, b| a - b)?;
        dx.axpy_inplace(dist_scale, &diff);
        let dz = codec.decode_vjp(&z_ce, &dx)?;
        adam.step(&mut [z_ce.as_mut_slice()], &[dz.as_slice()])?;
        if !z_ce.is_finite() {
            return Err(Error::NonFinite("opt baseline latent".into()));
        }
    }
    let x_ce = codec.decode(&z_ce)?;
    let labels = classifier.predict_batch(&x_ce)?;
    Ok(OptBaselineResult { x_ce, z_ce, labels })
}
