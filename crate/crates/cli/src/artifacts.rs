//! Checkpoint layout under the checkpoint directory:
//! `codec/` (glyph VAE), `classifier/classifier.lfck` and `flow/`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use leapfactual::codec::{load_codec, IdentityCodec, LoadedCodec};
use leapfactual::flow::FlowField;
use leapfactual::oracle::LocalClassifier;
use leapfactual::tensor::checkpoint;
use leapfactual_service::models::SharedCodec;

use crate::config::{Dataset, RunConfig};
use crate::exit::Missing;

pub fn codec_dir(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint_dir().join("codec")
}

pub fn classifier_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint_dir().join("classifier").join("classifier.lfck")
}

pub fn flow_dir(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint_dir().join("flow")
}

fn missing(what: &str, path: &std::path::Path, hint: &str) -> anyhow::Error {
    Missing(format!("{what} at {} (run `{hint}` first)", path.display())).into()
}

pub fn save_classifier(cfg: &RunConfig, clf: &LocalClassifier<f32>) -> Result<PathBuf> {
    let path = classifier_path(cfg);
    std::fs::create_dir_all(path.parent().expect("file path has a parent"))?;
    checkpoint::save(&clf.net, &path)?;
    Ok(path)
}

pub fn load_classifier(cfg: &RunConfig) -> Result<LocalClassifier<f32>> {
    let path = classifier_path(cfg);
    if !path.exists() {
        return Err(missing("classifier", &path, "train-classifier"));
    }
    let net = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok(LocalClassifier { net })
}

pub fn load_flow(cfg: &RunConfig) -> Result<FlowField<f32>> {
    let dir = flow_dir(cfg);
    if !dir.join("flow.json").exists() {
        return Err(missing("flow", &dir, "train-flow"));
    }
    Ok(FlowField::load(&dir).with_context(|| format!("loading {}", dir.display()))?.0)
}

/// The toy world is its own latent space; glyphs go through the trained VAE.
pub fn load_shared_codec(cfg: &RunConfig) -> Result<SharedCodec> {
    match cfg.dataset {
        Dataset::Toy => Ok(Box::new(IdentityCodec { dim: 2 })),
        Dataset::Idx => {
            let dir = codec_dir(cfg);
            if !dir.join("codec.json").exists() {
                return Err(missing("codec", &dir, "train-vae"));
            }
            Ok(match load_codec::<f32>(&dir).with_context(|| format!("loading {}", dir.display()))? {
                LoadedCodec::Identity(c) => Box::new(c),
                LoadedCodec::Vae(v) => Box::new(v),
            })
        }
    }
}
