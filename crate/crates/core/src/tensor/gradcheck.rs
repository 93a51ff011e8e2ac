//! Central finite-difference checks of reverse-mode network gradients.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseNet, Matrix};
use crate::error::Result;
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Result<Matrix<f64>> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// Compares analytic gradients of `L = Σ R ⊙ net(x)` with central
/// differences of step `h`. Every probe builds a fresh random net using
/// `activation` for hidden and output layers, then checks one random
/// coordinate: a parameter or, every other probe, an input.
pub fn check_gradients(activation: Activation, probes: usize, h: f64, seed: Seed) -> Result<GradCheckReport> {
    let mut rng = seed.stream("gradcheck");
    let mut worst = 0.0f64;
    for probe in 0..probes {
        let dims = [3, 5, 4, 2];
        let mut net = DenseNet::<f64>::new(&dims, activation, activation, seed.derive_index("gradcheck-net", probe as u64))?;
        let mut x = normal_matrix(4, dims[0], &mut rng)?;
        let upstream = normal_matrix(4, dims[3], &mut rng)?;
        let loss = |net: &DenseNet<f64>, x: &Matrix<f64>| -> Result<f64> {
            let y = net.forward(x)?;
            Ok(y.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum())
        };
        let (grads, dx) = net.backward(&x, &upstream)?;
        let (analytic, numeric) = if probe % 2 == 1 {
            let i = rng.random_range(0..x.as_slice().len());
            let orig = x.as_slice()[i];
            x.as_mut_slice()[i] = orig + h;
            let up = loss(&net, &x)?;
            x.as_mut_slice()[i] = orig - h;
            let down = loss(&net, &x)?;
            x.as_mut_slice()[i] = orig;
            (dx.as_slice()[i], (up - down) / (2.0 * h))
        } else {
            let grad_slices = grads.slices();
            let s = rng.random_range(0..grad_slices.len());
            let i = rng.random_range(0..grad_slices[s].len());
            let analytic = grad_slices[s][i];
            let mut shift = |delta: f64| -> Result<f64> {
                net.param_slices_mut()[s][i] += delta;
                let l = loss(&net, &x);
                net.param_slices_mut()[s][i] -= delta;
                l
            };
            let up = shift(h)?;
            let down = shift(-h)?;
            (analytic, (up - down) / (2.0 * h))
        };
        worst = worst.max(rel_error(analytic, numeric));
    }
    Ok(GradCheckReport {
        probes,
        max_rel_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_error(1.0, 1.0), 0.0);
        assert!((rel_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(rel_error(0.0, 1e-9) < 1e-2);
    }

    #[test]
    fn all_activations_agree_with_differences() {
        for act in [Activation::Identity, Activation::LEAKY_RELU_02, Activation::Silu, Activation::Sigmoid] {
            let r = check_gradients(act, 20, 1e-6, Seed(11)).unwrap();
            assert!(r.max_rel_error < 1e-3, "{act:?}: {}", r.max_rel_error);
        }
    }
}
