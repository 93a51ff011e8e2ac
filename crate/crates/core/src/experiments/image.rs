//! Glyph-image experiments: method comparison on a shared classifier and
//! codec, and classifier improvement by training on counterfactuals.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{train_vae, GenerativeCodec, MlpVae, VaeTrainConfig};
use crate::data::glyphs::{gen_glyphs, N_CLASSES, SIDE};
use crate::data::{build_latent_bank, split, LabeledSet, SplitSpec};
use crate::error::{Error, Result};
use crate::flow::{train_flow, CfmTrainConfig, FlowField, LrSchedule};
use crate::metrics::{
    accuracy, macro_ovr_auc, morph_errors, morph_measure, opt_baseline_ce, psnr, ssim, MetricRow, OptBaselineConfig,
};
use crate::oracle::{train_classifier, ClassifierTrainConfig, LocalClassifier};
use crate::rng::Seed;
use crate::tensor::Matrix;
use crate::transport::{leapfactual_batch, CeMode, LeapFactualConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagePipelineConfig {
    pub n_per_class: usize,
    pub train_fraction: f64,
    pub vae: VaeTrainConfig,
    pub classifier: ClassifierTrainConfig,
    pub flow: CfmTrainConfig,
    pub leap: LeapFactualConfig,
    pub opt: OptBaselineConfig,
    /// Test samples explained per run.
    pub n_explain: usize,
}

impl Default for ImagePipelineConfig {
    fn default() -> Self {
        let vae = VaeTrainConfig::default();
        Self {
            n_per_class: 250,
            train_fraction: 0.8,
            flow: CfmTrainConfig {
                epochs: 300,
                schedule: LrSchedule::Cosine,
                ..CfmTrainConfig::reference(vae.latent_dim, N_CLASSES)
            },
            vae,
            classifier: ClassifierTrainConfig::default(),
            leap: LeapFactualConfig::morpho(),
            opt: OptBaselineConfig::default(),
            n_explain: 100,
        }
    }
}

impl ImagePipelineConfig {
    fn flow_config(&self) -> CfmTrainConfig {
        CfmTrainConfig {
            latent_dim: self.vae.latent_dim,
            n_classes: N_CLASSES,
            ..self.flow.clone()
        }
    }
}

/// Train/test glyph sets plus the optional weak subset of the train split.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSplit {
    pub train: LabeledSet<f32>,
    pub test: LabeledSet<f32>,
    pub weak: Option<LabeledSet<f32>>,
}

pub fn glyph_split(config: &ImagePipelineConfig, subsample: Option<f64>, seed: Seed) -> Result<GlyphSplit> {
    let data = gen_glyphs::<f32>(config.n_per_class, seed.derive("glyphs").0)?;
    let s = split(
        data.len(),
        &SplitSpec {
            train_fraction: config.train_fraction,
            seed: seed.derive("split").0,
            subsample,
        },
    )?;
    if s.test.is_empty() {
        return Err(Error::Config("image experiments need a non-empty test split".into()));
    }
    Ok(GlyphSplit {
        train: data.subset(&s.train),
        test: data.subset(&s.test),
        weak: s.weak.map(|w| data.subset(&w)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageModels {
    pub data: GlyphSplit,
    pub vae: MlpVae<f32>,
    pub classifier: LocalClassifier<f32>,
    pub test_accuracy: f64,
    pub field: FlowField<f32>,
}

/// Trains the codec on `data.train`, the classifier on `classifier_set`, and
/// the flow on train-split latents labelled by that classifier.
fn train_models(config: &ImagePipelineConfig, data: GlyphSplit, classifier_set: &LabeledSet<f32>, seed: Seed) -> Result<ImageModels> {
    let (vae, _) = train_vae(&data.train, &config.vae, seed.derive("vae"))?;
    let (classifier, report) = train_classifier(classifier_set, Some(&data.test), &config.classifier, seed.derive("classifier"))?;
    let bank = build_latent_bank(&data.train, &vae, &classifier)?;
    let (field, _) = train_flow(&bank, &config.flow_config(), seed.derive("flow"))?;
    Ok(ImageModels {
        test_accuracy: report.heldout_accuracy.unwrap_or(f64::NAN),
        data,
        vae,
        classifier,
        field,
    })
}

pub fn train_image_models(config: &ImagePipelineConfig, seed: Seed) -> Result<ImageModels> {
    let data = glyph_split(config, None, seed)?;
    let train = data.train.clone();
    train_models(config, data, &train, seed)
}

/// Counterfactual latents for `z` toward `targets`, labelling through the
/// codec and classifier.
pub fn explain_batch(models: &ImageModels, z: &Matrix<f32>, targets: &[usize], config: &LeapFactualConfig) -> Result<Matrix<f32>> {
    let out = leapfactual_batch(z, targets, &models.field, config, |z| {
        models.classifier.predict_batch(&models.vae.decode(z)?)
    })?;
    Ok(out.z)
}

/// Mean absolute relative morphometric errors; NaN where no sample had a
/// usable measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphErrorMeans {
    pub area: f64,
    pub length: f64,
    pub slant: f64,
    pub thickness: f64,
    pub width: f64,
    pub height: f64,
}

pub const MORPH_METRICS: [&str; 6] = ["D(area)", "D(length)", "D(slant)", "D(thickness)", "D(width)", "D(height)"];

impl MorphErrorMeans {
    /// Values in [`MORPH_METRICS`] order.
    pub fn values(&self) -> [f64; 6] {
        [self.area, self.length, self.slant, self.thickness, self.width, self.height]
    }
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = v.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Correctness and similarity of one method's counterfactuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub acc: f64,
    pub auc: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub morph: MorphErrorMeans,
}

fn rows64(m: &Matrix<f32>) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Scores counterfactuals `x_ce` of sources `x` against their targets under
/// `classifier`. Similarity and morphometrics compare each counterfactual
/// with its source image.
pub fn score_counterfactuals(x: &Matrix<f32>, x_ce: &Matrix<f32>, targets: &[usize], classifier: &LocalClassifier<f32>) -> Result<MethodScores> {
    let predicted = classifier.predict_batch(x_ce)?;
    let proba = rows64(&classifier.proba_batch(x_ce)?);
    let src = rows64(x);
    let ce = rows64(x_ce);
    let n = src.len() as f64;
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut errs = Vec::with_capacity(src.len());
    for (a, b) in src.iter().zip(&ce) {
        psnr_sum += psnr(a, b)?;
        ssim_sum += ssim(a, b, 1.0)?;
        let e = match (morph_measure(a, SIDE, SIDE), morph_measure(b, SIDE, SIDE)) {
            (Ok(ra), Ok(rb)) => Some(morph_errors(&rb, &ra)),
            _ => None,
        };
        errs.push(e);
    }
    let morph = MorphErrorMeans {
        area: mean_defined(errs.iter().map(|e| e.and_then(|e| e.area))),
        length: mean_defined(errs.iter().map(|e| e.and_then(|e| e.length))),
        slant: mean_defined(errs.iter().map(|e| e.and_then(|e| e.slant))),
        thickness: mean_defined(errs.iter().map(|e| e.and_then(|e| e.thickness))),
        width: mean_defined(errs.iter().map(|e| e.and_then(|e| e.width))),
        height: mean_defined(errs.iter().map(|e| e.and_then(|e| e.height))),
    };
    Ok(MethodScores {
        acc: accuracy(&predicted, targets)?,
        auc: macro_ovr_auc(&proba, targets, classifier.net.output_dim())?,
        psnr: psnr_sum / n,
        ssim: ssim_sum / n,
        morph,
    })
}

pub const METHOD_NAMES: [&str; 3] = ["opt_baseline", "LeapFactual", "LeapFactual_R"];

/// One seed of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub seed: u64,
    pub classifier_accuracy: f64,
    pub opt_baseline: MethodScores,
    pub leapfactual: MethodScores,
    pub leapfactual_r: MethodScores,
}

impl ComparisonRun {
    pub fn methods(&self) -> [(&'static str, &MethodScores); 3] {
        [
            (METHOD_NAMES[0], &self.opt_baseline),
            (METHOD_NAMES[1], &self.leapfactual),
            (METHOD_NAMES[2], &self.leapfactual_r),
        ]
    }
}

/// Picks `n` test samples and, for each, a target other than the
/// classifier's prediction.
pub fn pick_queries(models: &ImageModels, n: usize, seed: Seed) -> Result<(Vec<usize>, Vec<usize>)> {
    let test = &models.data.test;
    let mut rng = seed.stream("queries");
    let mut idx: Vec<usize> = (0..test.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n.min(test.len()));
    let pred = models.classifier.predict_batch(&test.samples.select_rows(&idx))?;
    let targets = pred
        .iter()
        .map(|&p| {
            let t = rng.random_range(0..N_CLASSES - 1);
            if t >= p {
                t + 1
            } else {
                t
            }
        })
        .collect();
    Ok((idx, targets))
}

/// Explains the same queries with the gradient baseline, plain
/// counterfactuals and reliable counterfactuals.
pub fn comparison_run(config: &ImagePipelineConfig, seed: Seed) -> Result<ComparisonRun> {
    let models = train_image_models(config, seed)?;
    let (idx, targets) = pick_queries(&models, config.n_explain, seed)?;
    let x = models.data.test.samples.select_rows(&idx);
    let z = models.vae.encode(&x)?;

    let opt = opt_baseline_ce(&x, &targets, &models.vae, &models.classifier, &config.opt)?;
    let z_lf = explain_batch(&models, &z, &targets, &config.leap.for_mode(CeMode::Ce))?;
    let z_lfr = explain_batch(&models, &z, &targets, &config.leap.for_mode(CeMode::Reliable))?;

    let score = |x_ce: &Matrix<f32>| score_counterfactuals(&x, x_ce, &targets, &models.classifier);
    Ok(ComparisonRun {
        seed: seed.0,
        classifier_accuracy: models.test_accuracy,
        opt_baseline: score(&opt.x_ce)?,
        leapfactual: score(&models.vae.decode(&z_lf)?)?,
        leapfactual_r: score(&models.vae.decode(&z_lfr)?)?,
    })
}

/// Aggregates runs into `metric:method` rows.
pub fn comparison_rows(runs: &[ComparisonRun]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for m in 0..METHOD_NAMES.len() {
        let name = METHOD_NAMES[m];
        let pick = |f: &dyn Fn(&MethodScores) -> f64| runs.iter().map(|r| f(r.methods()[m].1)).collect::<Vec<_>>();
        rows.push(MetricRow::from_runs(format!("ACC:{name}"), &pick(&|s| s.acc))?);
        rows.push(MetricRow::from_runs(format!("AUC:{name}"), &pick(&|s| s.auc))?);
        rows.push(MetricRow::from_runs(format!("PSNR:{name}"), &pick(&|s| s.psnr))?);
        rows.push(MetricRow::from_runs(format!("SSIM:{name}"), &pick(&|s| s.ssim))?);
        for (k, label) in MORPH_METRICS.iter().enumerate() {
            rows.push(MetricRow::from_runs(format!("{label}:{name}"), &pick(&|s| s.morph.values()[k]))?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub pipeline: ImagePipelineConfig,
    /// Share of the train split the weak classifier sees.
    pub weak_fraction: f64,
    /// Share of the counterfactual set mixed into the weak training set.
    pub fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pipeline: ImagePipelineConfig::default(),
            weak_fraction: 0.2,
            fraction: 1.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("weak_fraction", self.weak_fraction), ("fraction", self.fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScores {
    pub acc: f64,
    pub auc: f64,
}

pub fn heldout_scores(classifier: &LocalClassifier<f32>, test: &LabeledSet<f32>) -> Result<HeldoutScores> {
    let predicted = classifier.predict_batch(&test.samples)?;
    let proba = rows64(&classifier.proba_batch(&test.samples)?);
    Ok(HeldoutScores {
        acc: accuracy(&predicted, &test.labels)?,
        auc: macro_ovr_auc(&proba, &test.labels, test.n_classes)?,
    })
}

/// One seed of the augmentation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRun {
    pub seed: u64,
    pub weak_size: usize,
    pub aux_size: usize,
    pub baseline: HeldoutScores,
    pub ce: HeldoutScores,
    pub reliable: HeldoutScores,
}

impl AugmentRun {
    pub fn scores(&self, mode: CeMode) -> HeldoutScores {
        match mode {
            CeMode::Ce => self.ce,
            CeMode::Reliable => self.reliable,
        }
    }
}

/// Labels every weak-set sample's counterfactual with its target and keeps a
/// uniform `fraction` of them.
fn auxiliary_set(
    weak: &LabeledSet<f32>,
    x_ce: Matrix<f32>,
    targets: Vec<usize>,
    fraction: f64,
    seed: Seed,
) -> Result<LabeledSet<f32>> {
    let all = LabeledSet::new(x_ce, targets, weak.n_classes, weak.shape)?;
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut seed.stream("aux-fraction"));
    idx.truncate(((all.len() as f64) * fraction).round() as usize);
    idx.sort_unstable();
    Ok(all.subset(&idx))
}

/// Trains a weak classifier on a subsample, explains every subsample point
/// toward every other class, and retrains on the subsample plus a fraction
/// of the counterfactuals (labelled with their targets) in both modes.
pub fn augment_run(config: &AugmentConfig, seed: Seed) -> Result<AugmentRun> {
    config.validate()?;
    let p = &config.pipeline;
    let data = glyph_split(p, Some(config.weak_fraction), seed)?;
    let weak = data.weak.clone().ok_or(Error::Empty("weak subset"))?;
    if weak.is_empty() {
        return Err(Error::Empty("weak subset"));
    }
    let models = train_models(p, data, &weak, seed)?;
    let baseline = heldout_scores(&models.classifier, &models.data.test)?;

    let z_weak = models.vae.encode(&weak.samples)?;
    let mut rows = Vec::with_capacity(weak.len() * (N_CLASSES - 1));
    let mut targets = Vec::with_capacity(rows.capacity());
    for i in 0..weak.len() {
        for t in (0..N_CLASSES).filter(|&t| t != weak.labels[i]) {
            rows.push(i);
            targets.push(t);
        }
    }
    let z = z_weak.select_rows(&rows);
    let z_ce = explain_batch(&models, &z, &targets, &p.leap.for_mode(CeMode::Ce))?;
    // Injection continues from the blended points: a search without blending
    // leaps queries the current label and injects from there.
    let inject_only = LeapFactualConfig {
        n_blend: 0,
        ..p.leap.for_mode(CeMode::Reliable)
    };
    let z_rel = explain_batch(&models, &z_ce, &targets, &inject_only)?;

    let retrain = |z: &Matrix<f32>| -> Result<HeldoutScores> {
        let aux = auxiliary_set(&weak, models.vae.decode(z)?, targets.clone(), config.fraction, seed)?;
        let set = weak.concat(&aux)?;
        let (clf, _) = train_classifier(&set, None, &p.classifier, seed.derive("classifier"))?;
        heldout_scores(&clf, &models.data.test)
    };
    let ce = retrain(&z_ce)?;
    let reliable = retrain(&z_rel)?;
    Ok(AugmentRun {
        seed: seed.0,
        weak_size: weak.len(),
        aux_size: ((targets.len() as f64) * config.fraction).round() as usize,
        baseline,
        ce,
        reliable,
    })
}

/// Aggregates augmentation runs into `metric:arm` rows.
pub fn augment_rows(runs: &[AugmentRun]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let arms: [(&str, fn(&AugmentRun) -> HeldoutScores); 3] = [
        ("baseline", |r| r.baseline),
        ("ce", |r| r.ce),
        ("reliable", |r| r.reliable),
    ];
    for (name, get) in arms {
        rows.push(MetricRow::from_runs(format!("ACC:{name}"), &runs.iter().map(|r| get(r).acc).collect::<Vec<_>>())?);
        rows.push(MetricRow::from_runs(format!("AUC:{name}"), &runs.iter().map(|r| get(r).auc).collect::<Vec<_>>())?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_fractions_are_validated() {
        let mut c = AugmentConfig::default();
        assert!(c.validate().is_ok());
        c.fraction = 0.0;
        assert!(c.validate().is_err());
        c.fraction = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn auxiliary_subsample_keeps_fraction() {
        let weak = gen_glyphs::<f32>(2, 1).unwrap();
        let x = weak.samples.clone();
        let aux = auxiliary_set(&weak, x.clone(), vec![3; 20], 0.25, Seed(1)).unwrap();
        assert_eq!(aux.len(), 5);
        assert!(aux.labels.iter().all(|&l| l == 3));
        let full = auxiliary_set(&weak, x, vec![3; 20], 1.0, Seed(1)).unwrap();
        assert_eq!(full.len(), 20);
    }

    #[test]
    fn mean_skips_undefined() {
        assert_eq!(mean_defined([Some(1.0), None, Some(3.0)].into_iter()), 2.0);
        assert!(mean_defined([None].into_iter()).is_nan());
    }
}
