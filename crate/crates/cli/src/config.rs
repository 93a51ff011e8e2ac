use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use leapfactual::experiments::image::ImagePipelineConfig;
use leapfactual::experiments::toy::ToyPipelineConfig;
use leapfactual::transport::LeapFactualConfig;
use leapfactual_service::store::OracleKind;
use serde::{Deserialize, Serialize};

use crate::exit::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    /// Four-square 2D world.
    #[default]
    Toy,
    /// 28x28 glyph images stored as IDX files.
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub outputs: PathBuf,
    pub sessions: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            checkpoints: "checkpoints".into(),
            outputs: "outputs".into(),
            sessions: "sessions".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Share of generated or loaded data used for training; the rest is held out.
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSettings {
    /// Share of the train split seen by the weak classifier.
    pub weak_fraction: f64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self { weak_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Random (source, target) pairs per seed in the toy suite.
    pub toy_queries: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            toy_queries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Dataset,
    pub oracle: OracleKind,
    pub paths: Paths,
    pub data: DataConfig,
    pub toy: ToyPipelineConfig,
    pub image: ImagePipelineConfig,
    pub leapfactual: LeapFactualConfig,
    pub augment: AugmentSettings,
    pub eval: EvalConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: Dataset::default(),
            oracle: OracleKind::Local,
            paths: Paths::default(),
            data: DataConfig::default(),
            toy: ToyPipelineConfig::default(),
            image: ImagePipelineConfig::default(),
            leapfactual: LeapFactualConfig::default(),
            augment: AugmentSettings::default(),
            eval: EvalConfig::default(),
            base: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file, rejecting unknown keys. Relative paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("config {}", path.display()))?;
        cfg.base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Invalid(e.to_string()))?;
        cfg.base = PathBuf::from(".");
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("paths.data", &self.paths.data),
            ("paths.checkpoints", &self.paths.checkpoints),
            ("paths.outputs", &self.paths.outputs),
            ("paths.sessions", &self.paths.sessions),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Invalid(format!("{name} is empty")).into());
            }
        }
        if !self.base.is_dir() {
            return Err(Invalid(format!("config directory {} does not exist", self.base.display())).into());
        }
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Invalid(format!("data.train_fraction must lie in (0, 1), got {f}")).into());
        }
        if self.eval.seeds.is_empty() {
            return Err(Invalid("eval.seeds is empty".into()).into());
        }
        self.leapfactual.validate().map_err(|e| Invalid(e.to_string()))?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.paths.data)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.resolve(&self.paths.checkpoints)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.outputs)
    }

    pub fn session_dir(&self) -> PathBuf {
        self.resolve(&self.paths.sessions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        let a: toml::Value = toml::from_str(&text).unwrap();
        let b: toml::Value = toml::from_str(&back.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("seed = 1\ncolour = \"red\"\n").unwrap_err();
        assert!(err.is::<Invalid>());
        let err = RunConfig::from_toml("[leapfactual]\nn_blend = 3\nspeed = 2\n").unwrap_err();
        assert!(err.is::<Invalid>());
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[leapfactual]\nn_blend = 30\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.leapfactual.n_blend, 30);
        assert_eq!(cfg.leapfactual.n_inject, LeapFactualConfig::morpho().n_inject);
        assert_eq!(cfg.oracle, OracleKind::Local);
        assert_eq!(cfg.paths, Paths::default());
    }
}
