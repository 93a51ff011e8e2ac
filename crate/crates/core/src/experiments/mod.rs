//! End-to-end pipelines: the toy world's transport checks and panels, the
//! image method comparison, and counterfactual augmentation.

pub mod image;
pub mod svg;
pub mod toy;

use crate::error::Result;
use crate::rng::Seed;

/// Runs `f` once per seed and returns results in seed order.
pub fn per_seed<R>(seeds: &[u64], f: impl Fn(Seed) -> Result<R>) -> Result<Vec<R>> {
    seeds.iter().map(|&s| f(Seed(s))).collect()
}
