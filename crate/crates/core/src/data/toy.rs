//! The four-square toy world: `z = c_p + r_p` with `c_p ∈ {±0.25}²` and
//! `r_p ∈ (−0.25, 0.25)²`. Data space and latent space coincide.

use rand::Rng;

use super::{LabeledSet, SampleShape};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const HALF_WIDTH: f64 = 0.25;

/// Square centers, indexed by class.
pub const CENTERS: [[f64; 2]; 4] = [[-0.25, -0.25], [0.25, -0.25], [-0.25, 0.25], [0.25, 0.25]];

pub const CLASS_NAMES: [&str; 4] = ["blue", "yellow", "green", "red"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub n_per_class: usize,
    pub seed: u64,
}

pub fn center<T: Scalar>(class: usize) -> [T; 2] {
    [T::lit(CENTERS[class][0]), T::lit(CENTERS[class][1])]
}

/// Nearest-center class; ties go to the lowest index.
pub fn nearest_center(z: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, ctr) in CENTERS.iter().enumerate() {
        let d = (z[0] - ctr[0]).powi(2) + (z[1] - ctr[1]).powi(2);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Draws a relative position strictly inside the open square, such that
/// `center + r` stays strictly inside after rounding to `T`.
pub fn sample_residual<T: Scalar, R: Rng>(rng: &mut R, class: usize) -> [T; 2] {
    let c = center::<T>(class);
    let hw = T::lit(HALF_WIDTH);
    let mut out = [T::zero(); 2];
    for k in 0..2 {
        loop {
            let r = T::lit(rng.random_range(-HALF_WIDTH..HALF_WIDTH));
            let z = c[k] + r;
            if (z - c[k]).abs() < hw && r.abs() < hw {
                out[k] = r;
                break;
            }
        }
    }
    out
}

pub fn gen_toy<T: Scalar>(config: &ToyConfig) -> Result<LabeledSet<T>> {
    if config.n_per_class == 0 {
        return Err(Error::Config("n_per_class must be positive".into()));
    }
    let mut rng = Seed(config.seed).stream("toy");
    let n = 4 * config.n_per_class;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..4 {
        let c = center::<T>(class);
        for _ in 0..config.n_per_class {
            let r = sample_residual::<T, _>(&mut rng, class);
            data.push(c[0] + r[0]);
            data.push(c[1] + r[1]);
            labels.push(class);
        }
    }
    LabeledSet::new(Matrix::from_vec(n, 2, data)?, labels, 4, SampleShape::Vector { dim: 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_strictly_inside_their_square() {
        let set = gen_toy::<f32>(&ToyConfig { n_per_class: 2000, seed: 5 }).unwrap();
        for (row, &label) in set.samples.iter_rows().zip(&set.labels) {
            let c = center::<f32>(label);
            assert!((row[0] - c[0]).abs() < 0.25 && (row[1] - c[1]).abs() < 0.25);
        }
        assert_eq!(set.class_counts(), vec![2000; 4]);
    }

    #[test]
    fn class_means_approach_centers() {
        let set = gen_toy::<f64>(&ToyConfig { n_per_class: 10_000, seed: 1 }).unwrap();
        for class in 0..4 {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (row, _) in set.samples.iter_rows().zip(&set.labels).filter(|(_, &l)| l == class) {
                sx += row[0];
                sy += row[1];
            }
            let n = 10_000.0;
            assert!((sx / n - CENTERS[class][0]).abs() < 0.02);
            assert!((sy / n - CENTERS[class][1]).abs() < 0.02);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let a = gen_toy::<f32>(&ToyConfig { n_per_class: 10, seed: 2 }).unwrap();
        let b = gen_toy::<f32>(&ToyConfig { n_per_class: 10, seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert!(gen_toy::<f32>(&ToyConfig { n_per_class: 0, seed: 2 }).is_err());
    }

    #[test]
    fn nearest_center_labels_quadrants() {
        for (c, ctr) in CENTERS.iter().enumerate() {
            assert_eq!(nearest_center(ctr), c);
        }
    }
}
