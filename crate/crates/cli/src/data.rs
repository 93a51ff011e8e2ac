//! On-disk datasets: the toy world as `x,y,label` CSV and glyph images as
//! IDX train/test file pairs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use leapfactual::data::idx::{load_labeled, save_labeled};
use leapfactual::data::{split, LabeledSet, SampleShape, SplitSpec};
use leapfactual::experiments::toy::TOY_CLASSES;
use leapfactual::tensor::Matrix;
use leapfactual::Seed;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exit::{Invalid, Missing};

pub const TOY_FILE: &str = "toy.csv";
pub const IDX_FILES: [&str; 4] = ["train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx"];

#[derive(Debug, Serialize, Deserialize)]
struct ToyRow {
    x: f32,
    y: f32,
    label: usize,
}

pub fn write_toy_csv(path: &Path, set: &LabeledSet<f32>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (i, &label) in set.labels.iter().enumerate() {
        let r = set.samples.row(i);
        w.serialize(ToyRow { x: r[0], y: r[1], label })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_toy_csv(path: &Path) -> Result<LabeledSet<f32>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut values, mut labels) = (Vec::new(), Vec::new());
    for (i, row) in r.deserialize::<ToyRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if row.label >= TOY_CLASSES {
            return Err(Invalid(format!("{} row {}: label {} out of range", path.display(), i + 1, row.label)).into());
        }
        values.extend([row.x, row.y]);
        labels.push(row.label);
    }
    let n = labels.len();
    Ok(LabeledSet::new(Matrix::from_vec(n, 2, values)?, labels, TOY_CLASSES, SampleShape::Vector { dim: 2 })?)
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Missing(format!("{} (run `{hint}` first)", path.display())).into())
    }
}

pub fn load_toy(cfg: &RunConfig) -> Result<LabeledSet<f32>> {
    read_toy_csv(&require(cfg.data_dir().join(TOY_FILE), "gen-data --toy")?)
}

/// Deterministic train/held-out split of the toy file.
pub fn toy_split(cfg: &RunConfig, set: &LabeledSet<f32>) -> Result<(LabeledSet<f32>, LabeledSet<f32>)> {
    let s = split(
        set.len(),
        &SplitSpec {
            train_fraction: cfg.data.train_fraction,
            seed: Seed(cfg.seed).derive("split").0,
            subsample: None,
        },
    )?;
    Ok((set.subset(&s.train), set.subset(&s.test)))
}

pub fn save_idx(dir: &Path, train: &LabeledSet<f32>, test: &LabeledSet<f32>) -> Result<()> {
    save_labeled(train, dir.join(IDX_FILES[0]), dir.join(IDX_FILES[1]))?;
    save_labeled(test, dir.join(IDX_FILES[2]), dir.join(IDX_FILES[3]))?;
    Ok(())
}

/// Train and test glyph sets.
pub fn load_idx(cfg: &RunConfig) -> Result<(LabeledSet<f32>, LabeledSet<f32>)> {
    let dir = cfg.data_dir();
    let [a, b, c, d] = IDX_FILES.map(|f| require(dir.join(f), "gen-data --idx-synth"));
    let train = load_labeled(a?, b?).context("loading training images")?;
    let test = load_labeled(c?, d?).context("loading test images")?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_csv_roundtrips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let samples = Matrix::from_vec(3, 2, vec![0.1f32, -0.2, 1.0 / 3.0, 0.25, -0.4999, 7e-8]).unwrap();
        let set = LabeledSet::new(samples, vec![0, 3, 1], TOY_CLASSES, SampleShape::Vector { dim: 2 }).unwrap();
        let path = dir.path().join("t.csv");
        write_toy_csv(&path, &set).unwrap();
        assert_eq!(read_toy_csv(&path).unwrap(), set);
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "x,y,label\n0.1,0.2,4\n").unwrap();
        assert!(read_toy_csv(&path).unwrap_err().is::<Invalid>());
    }
}
