//! Datasets: the four-square toy world, IDX ingestion, synthetic glyphs,
//! deterministic splits and class-keyed latent banks.

mod bank;
pub mod glyphs;
pub mod idx;
pub mod toy;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use bank::{build_latent_bank, LatentBank};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// What one row of a dataset represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleShape {
    Vector { dim: usize },
    Image { rows: usize, cols: usize },
}

impl SampleShape {
    pub fn len(self) -> usize {
        match self {
            SampleShape::Vector { dim } => dim,
            SampleShape::Image { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Samples (one per row) with ground-truth labels and, optionally, the
/// labels some classifier assigned to them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub samples: Matrix<T>,
    pub labels: Vec<usize>,
    pub predicted: Option<Vec<usize>>,
    pub n_classes: usize,
    pub shape: SampleShape,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(samples: Matrix<T>, labels: Vec<usize>, n_classes: usize, shape: SampleShape) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::shape("LabeledSet::new", samples.rows(), labels.len()));
        }
        if samples.cols() != shape.len() {
            return Err(Error::shape("LabeledSet::new", shape.len(), samples.cols()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelRange { label, n_classes });
        }
        Ok(Self {
            samples,
            labels,
            predicted: None,
            n_classes,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: self.samples.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            predicted: self
                .predicted
                .as_ref()
                .map(|p| idx.iter().map(|&i| p[i]).collect()),
            n_classes: self.n_classes,
            shape: self.shape,
        }
    }

    /// Row-wise concatenation; both sets must describe the same space.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape || self.n_classes != other.n_classes {
            return Err(Error::shape("LabeledSet::concat", format!("{:?}", self.shape), format!("{:?}", other.shape)));
        }
        let mut data = self.samples.as_slice().to_vec();
        data.extend_from_slice(other.samples.as_slice());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledSet::new(
            Matrix::from_vec(self.len() + other.len(), self.samples.cols(), data)?,
            labels,
            self.n_classes,
            self.shape,
        )
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Fraction of the train split kept as a reduced "weak" training subset.
    pub subsample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub weak: Option<Vec<usize>>,
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Config(format!("{name} must lie in (0, 1], got {f}")));
    }
    Ok(())
}

/// Deterministic shuffled split of `n` items.
pub fn split(n: usize, spec: &SplitSpec) -> Result<Split> {
    check_fraction("train_fraction", spec.train_fraction)?;
    if let Some(f) = spec.subsample {
        check_fraction("subsample", f)?;
    }
    let seed = Seed(spec.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.stream("split"));
    let n_train = ((n as f64) * spec.train_fraction).round() as usize;
    let test = idx.split_off(n_train.min(n));
    let weak = spec.subsample.map(|f| {
        let mut t = idx.clone();
        t.shuffle(&mut seed.stream("subsample"));
        t.truncate(((idx.len() as f64) * f).round() as usize);
        t
    });
    Ok(Split {
        train: idx,
        test,
        weak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_fraction_leaves_test_empty() {
        let s = split(50, &SplitSpec { train_fraction: 1.0, seed: 1, subsample: None }).unwrap();
        assert_eq!(s.train.len(), 50);
        assert!(s.test.is_empty());
    }

    #[test]
    fn splits_are_deterministic_disjoint_and_exhaustive() {
        let spec = SplitSpec { train_fraction: 0.7, seed: 9, subsample: Some(0.2) };
        let a = split(1000, &spec).unwrap();
        assert_eq!(a, split(1000, &spec).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        let weak = a.weak.unwrap();
        assert!(weak.iter().all(|i| a.train.contains(i)));
    }

    #[test]
    fn twenty_percent_of_thousand_is_two_hundred() {
        let s = split(1000, &SplitSpec { train_fraction: 1.0, seed: 3, subsample: Some(0.2) }).unwrap();
        assert_eq!(s.weak.unwrap().len(), 200);
    }

    #[test]
    fn fractions_validated() {
        assert!(split(10, &SplitSpec { train_fraction: 0.0, seed: 0, subsample: None }).is_err());
        assert!(split(10, &SplitSpec { train_fraction: 0.5, seed: 0, subsample: Some(1.5) }).is_err());
    }

    #[test]
    fn labels_checked_against_class_count() {
        let m = Matrix::<f32>::zeros(2, 1);
        assert!(LabeledSet::new(m, vec![0, 3], 3, SampleShape::Vector { dim: 1 }).is_err());
    }
}
