use rand::Rng;

use super::LabeledSet;
use crate::codec::GenerativeCodec;
use crate::error::{Error, Result};
use crate::oracle::{ClassifierOracle, OracleError};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Encoded training latents bucketed by the label the *classifier* assigned,
/// never by dataset ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBank<T> {
    latents: Matrix<T>,
    labels: Vec<usize>,
    buckets: Vec<Vec<usize>>,
}

impl<T: Scalar> LatentBank<T> {
    pub fn new(latents: Matrix<T>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if latents.rows() != labels.len() {
            return Err(Error::shape("LatentBank::new", latents.rows(), labels.len()));
        }
        let mut buckets = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            buckets
                .get_mut(l)
                .ok_or(Error::LabelRange { label: l, n_classes })?
                .push(i);
        }
        Ok(Self { latents, labels, buckets })
    }

    pub fn n_classes(&self) -> usize {
        self.buckets.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn latents(&self) -> &Matrix<T> {
        &self.latents
    }

    /// Predicted label of each banked latent.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bucket(&self, class: usize) -> &[usize] {
        self.buckets.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn bucket_sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Vec::len).collect()
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.buckets.len()).filter(|&c| self.buckets[c].is_empty()).collect()
    }

    /// Uniform draw (with replacement) from the class bucket.
    pub fn draw<R: Rng>(&self, class: usize, rng: &mut R) -> Result<&[T]> {
        let bucket = self.bucket(class);
        if bucket.is_empty() {
            return Err(Error::ClassCoverage { class });
        }
        Ok(self.latents.row(bucket[rng.random_range(0..bucket.len())]))
    }
}

/// Encodes every sample and keys it by the oracle's prediction for it.
pub fn build_latent_bank<T, C, O>(dataset: &LabeledSet<T>, codec: &C, oracle: &O) -> Result<LatentBank<T>>
where
    T: Scalar,
    C: GenerativeCodec<T> + ?Sized,
    O: ClassifierOracle<T> + ?Sized,
{
    let latents = codec.encode(&dataset.samples)?;
    let mut labels = Vec::with_capacity(dataset.len());
    for row in dataset.samples.iter_rows() {
        let label = oracle.predict(row).map_err(|e| match e {
            OracleError::Model(e) => e,
            other => Error::Config(format!("bank construction needs an always-available oracle: {other}")),
        })?;
        labels.push(label);
    }
    LatentBank::new(latents, labels, oracle.n_classes())
}
