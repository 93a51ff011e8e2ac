//! The four-square toy world: every point is `c_p + r_p` with `c_p` one of
//! four class centres and `r_p` a relative position inside the square. Data
//! is its own latent, so the codec is the identity.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::svg::panel_svg;
use crate::codec::IdentityCodec;
use crate::data::toy::{center, gen_toy, nearest_center, sample_residual, ToyConfig, CENTERS};
use crate::data::{LabeledSet, LatentBank};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, macro_ovr_auc, psnr, ssim, MetricRow};
use crate::flow::{train_flow, CfmTrainConfig, FlowField, FlowTrainLog, LrSchedule};
use crate::oracle::{train_classifier, ClassifierOracle, ClassifierTrainConfig, LocalClassifier, OracleError};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::transport::{
    blend_alpha, integrate_batch, leap_batch, leap_with_lift, leapfactual, leapfactual_batch, CeMode, LeapConfig, LeapFactualConfig, LeapOutcome, Phase,
    Trajectory, TrajectoryEntry, VelocityField,
};

pub const TOY_CLASSES: usize = 4;
/// The class every toy transport heads for ("red").
pub const TOY_TARGET: usize = 3;

/// Exact toy labeller: the class of the nearest centre.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestCenterOracle;

impl<T: Scalar> ClassifierOracle<T> for NearestCenterOracle {
    fn n_classes(&self) -> usize {
        TOY_CLASSES
    }

    fn predict(&self, x: &[T]) -> std::result::Result<usize, OracleError> {
        if x.len() != 2 {
            return Err(Error::shape("NearestCenterOracle", 2, x.len()).into());
        }
        Ok(nearest_center(&[x[0].to_f64_lossy(), x[1].to_f64_lossy()]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyPipelineConfig {
    pub n_per_class: usize,
    pub flow: CfmTrainConfig,
    pub classifier: ClassifierTrainConfig,
}

impl Default for ToyPipelineConfig {
    fn default() -> Self {
        Self {
            n_per_class: 8000,
            flow: toy_flow_config(),
            classifier: ClassifierTrainConfig {
                hidden: vec![32, 32],
                epochs: 5,
                batch_size: 128,
                lr: 1e-2,
            },
        }
    }
}

/// Flow settings under which the toy field separates the four squares
/// cleanly: σ = 0, a deeper net, larger batches, more epochs and cosine
/// learning-rate decay.
pub fn toy_flow_config() -> CfmTrainConfig {
    CfmTrainConfig {
        sigma: 0.0,
        epochs: 100,
        batch_size: 512,
        lr: 0.002,
        latent_dim: 2,
        n_classes: TOY_CLASSES,
        hidden: vec![128, 128, 128],
        schedule: LrSchedule::Cosine,
    }
}

pub fn toy_data<T: Scalar>(config: &ToyPipelineConfig, seed: Seed) -> Result<LabeledSet<T>> {
    gen_toy(&ToyConfig {
        n_per_class: config.n_per_class,
        seed: seed.derive("toy-data").0,
    })
}

/// Trains the toy field on points labelled by their square.
pub fn train_toy_field(config: &ToyPipelineConfig, seed: Seed) -> Result<(FlowField<f32>, FlowTrainLog)> {
    let data = toy_data::<f32>(config, seed)?;
    let bank = LatentBank::new(data.samples, data.labels, TOY_CLASSES)?;
    train_flow(&bank, &config.flow, seed.derive("toy-flow"))
}

pub fn train_toy_classifier(config: &ToyPipelineConfig, seed: Seed) -> Result<LocalClassifier<f32>> {
    let data = toy_data::<f32>(config, seed)?;
    Ok(train_classifier(&data, None, &config.classifier, seed.derive("toy-classifier"))?.0)
}

/// Passing trials out of the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateReport {
    pub passed: usize,
    pub total: usize,
}

impl RateReport {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn row64<T: Scalar>(m: &Matrix<T>, r: usize) -> Vec<f64> {
    m.row(r).iter().map(|v| v.to_f64_lossy()).collect()
}

fn max_pairwise(points: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            worst = worst.max(dist(a, b));
        }
    }
    worst
}

fn shared_residual_batch<T: Scalar>(residual: [f64; 2], classes: &[usize]) -> Result<Matrix<T>> {
    let data = classes
        .iter()
        .flat_map(|&c| [T::lit(CENTERS[c][0] + residual[0]), T::lit(CENTERS[c][1] + residual[1])])
        .collect();
    Matrix::from_vec(classes.len(), 2, data)
}

/// Replacement: for each trial, the non-target classes share one residual
/// and take a full leap (γ = 1) to `target`. A trial passes when every
/// landing is within `tol` of `c_target + r` and of every other landing.
pub fn replacement_check<T, F>(field: &F, trials: usize, target: usize, tol: f64, euler_steps: usize, seed: Seed) -> Result<RateReport>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    let mut rng = seed.stream("replacement");
    let sources: Vec<usize> = (0..TOY_CLASSES).filter(|&c| c != target).collect();
    let cfg = LeapConfig::new(1.0, 1.0).with_steps(euler_steps);
    let mut passed = 0;
    for _ in 0..trials {
        let r = sample_residual::<f64, _>(&mut rng, target);
        let z = shared_residual_batch::<T>(r, &sources)?;
        let landed = leap_batch(field, &z, &sources, &vec![target; sources.len()], &cfg)?;
        let goal = [CENTERS[target][0] + r[0], CENTERS[target][1] + r[1]];
        let pts: Vec<Vec<f64>> = (0..sources.len()).map(|i| row64(&landed, i)).collect();
        if pts.iter().all(|p| dist(p, &goal) < tol) && max_pairwise(&pts) < tol {
            passed += 1;
        }
    }
    Ok(RateReport { passed, total: trials })
}

/// Compression: the four points sharing one residual are lifted all the way
/// to `t = 0` under their own class. A trial passes when all lifted points
/// lie within `tol` of one another.
pub fn compression_check<T, F>(field: &F, trials: usize, tol: f64, euler_steps: usize, seed: Seed) -> Result<RateReport>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    let mut rng = seed.stream("compression");
    let classes: Vec<usize> = (0..TOY_CLASSES).collect();
    let mut passed = 0;
    for _ in 0..trials {
        let r = sample_residual::<f64, _>(&mut rng, 0);
        let z = shared_residual_batch::<T>(r, &classes)?;
        let lifted = integrate_batch(field, &z, &classes, T::one(), T::zero(), T::one(), euler_steps)?;
        let pts: Vec<Vec<f64>> = (0..classes.len()).map(|i| row64(&lifted, i)).collect();
        if max_pairwise(&pts) < tol {
            passed += 1;
        }
    }
    Ok(RateReport { passed, total: trials })
}

/// Blending: sources from the non-target classes take `n_leaps` partial
/// leaps with `γ_lift = γ_land = gamma`, lifting under their original class
/// every time. A source passes when the blend coefficient α (share of the
/// source centre left in the point) strictly decreases from leap 1 to leap
/// `n_leaps`.
pub fn blending_check<T, F>(
    field: &F,
    sources: usize,
    n_leaps: usize,
    gamma: f64,
    target: usize,
    euler_steps: usize,
    seed: Seed,
) -> Result<RateReport>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    let mut rng = seed.stream("blending");
    let others: Vec<usize> = (0..TOY_CLASSES).filter(|&c| c != target).collect();
    let classes: Vec<usize> = (0..sources).map(|i| others[i % others.len()]).collect();
    let residuals: Vec<[f64; 2]> = classes.iter().map(|&c| sample_residual::<f64, _>(&mut rng, c)).collect();
    let data = classes
        .iter()
        .zip(&residuals)
        .flat_map(|(&c, r)| [T::lit(CENTERS[c][0] + r[0]), T::lit(CENTERS[c][1] + r[1])])
        .collect();
    let mut z = Matrix::from_vec(sources, 2, data)?;
    let targets = vec![target; sources];
    let cfg = LeapConfig::new(gamma, gamma).with_steps(euler_steps);
    let mut alphas = vec![Vec::with_capacity(n_leaps); sources];
    for _ in 0..n_leaps {
        z = leap_batch(field, &z, &classes, &targets, &cfg)?;
        for (i, series) in alphas.iter_mut().enumerate() {
            series.push(blend_alpha(&row64(&z, i), &residuals[i], &CENTERS[classes[i]], &CENTERS[target])?);
        }
    }
    let passed = alphas.iter().filter(|a| a.windows(2).all(|w| w[1] < w[0])).count();
    Ok(RateReport { passed, total: sources })
}

/// Projection of `z` onto the unit direction of `class`'s centre.
pub fn center_projection(z: &[f64], class: usize) -> f64 {
    let c = CENTERS[class];
    let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
    (z[0] * c[0] + z[1] * c[1]) / norm
}

/// Injection: sources inside `class` take `n_leaps` leaps with
/// `γ_lift = 0`, `γ_land = 1` and source == target. A source passes when its
/// projection onto the class-centre direction strictly increases at every
/// leap.
pub fn injection_check<T, F>(field: &F, sources: usize, n_leaps: usize, class: usize, euler_steps: usize, seed: Seed) -> Result<RateReport>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    let mut rng = seed.stream("injection");
    let data = (0..sources)
        .flat_map(|_| {
            let r = sample_residual::<f64, _>(&mut rng, class);
            [T::lit(CENTERS[class][0] + r[0]), T::lit(CENTERS[class][1] + r[1])]
        })
        .collect();
    let mut z = Matrix::from_vec(sources, 2, data)?;
    let labels = vec![class; sources];
    let cfg = LeapConfig::new(0.0, 1.0).with_steps(euler_steps);
    let mut proj: Vec<Vec<f64>> = (0..sources).map(|i| vec![center_projection(&row64(&z, i), class)]).collect();
    for _ in 0..n_leaps {
        z = leap_batch(field, &z, &labels, &labels, &cfg)?;
        for (i, p) in proj.iter_mut().enumerate() {
            p.push(center_projection(&row64(&z, i), class));
        }
    }
    let passed = proj.iter().filter(|p| p.windows(2).all(|w| w[1] > w[0])).count();
    Ok(RateReport { passed, total: sources })
}

/// Runs `n_leaps` leaps that always lift under `y_c`, recording every lifted
/// and landed point. Landed points are labelled by the nearest centre.
pub fn fixed_label_trajectory<T, F>(field: &F, z: &[T], y_c: usize, target: usize, cfg: &LeapConfig, n_leaps: usize) -> Result<Trajectory>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    let mut entries = vec![TrajectoryEntry {
        leap: 0,
        phase: Phase::Source,
        t: 1.0,
        z: to64(z),
        label: Some(nearest_center(&to64(z))),
        wall_ms: 0,
    }];
    let mut cur = z.to_vec();
    for leap in 0..n_leaps {
        let (lifted, landed) = leap_with_lift(field, &cur, y_c, target, cfg)?;
        let landed64 = to64(&landed);
        entries.push(TrajectoryEntry {
            leap,
            phase: Phase::Lift,
            t: 0.0,
            z: to64(&lifted),
            label: Some(y_c),
            wall_ms: 0,
        });
        entries.push(TrajectoryEntry {
            leap,
            phase: Phase::Land,
            t: 1.0,
            label: Some(nearest_center(&landed64)),
            z: landed64,
            wall_ms: 0,
        });
        cur = landed;
    }
    let final_label = entries.last().and_then(|e| e.label);
    Ok(Trajectory {
        entries,
        final_label,
        stopped_early: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Panel {
    pub name: char,
    pub title: String,
    pub trajectories: Vec<Trajectory>,
}

fn toy_point<T: Scalar>(class: usize, r: [f64; 2]) -> Vec<T> {
    let c = center::<f64>(class);
    vec![T::lit(c[0] + r[0]), T::lit(c[1] + r[1])]
}

/// The five toy panels: (a) full leaps of many blue sources to red,
/// (b) three classes sharing one residual replaced by red, (c) partial
/// blending leaps, (d) injection inside red, (e) a complete counterfactual
/// search queried against `oracle`.
pub fn fig3_panels<T, F, O>(field: &F, oracle: &O, euler_steps: usize, seed: Seed) -> Result<Vec<Fig3Panel>>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
    O: ClassifierOracle<T> + ?Sized,
{
    let mut rng = seed.stream("fig3");
    let full = LeapConfig::new(1.0, 1.0).with_steps(euler_steps);
    let target = TOY_TARGET;

    let a = (0..8)
        .map(|_| {
            let r = sample_residual::<f64, _>(&mut rng, 0);
            fixed_label_trajectory(field, &toy_point::<T>(0, r), 0, target, &full, 1)
        })
        .collect::<Result<Vec<_>>>()?;

    let r = sample_residual::<f64, _>(&mut rng, 0);
    let b = [0, 1, 2]
        .iter()
        .map(|&c| fixed_label_trajectory(field, &toy_point::<T>(c, r), c, target, &full, 1))
        .collect::<Result<Vec<_>>>()?;

    let blend = LeapConfig::new(0.1, 0.1).with_steps(euler_steps);
    let r = sample_residual::<f64, _>(&mut rng, 0);
    let c = [0, 1, 2]
        .iter()
        .map(|&c| fixed_label_trajectory(field, &toy_point::<T>(c, r), c, target, &blend, 5))
        .collect::<Result<Vec<_>>>()?;

    let inject = LeapConfig::new(0.0, 1.0).with_steps(euler_steps);
    let d = (0..4)
        .map(|_| {
            let r = sample_residual::<f64, _>(&mut rng, target);
            fixed_label_trajectory(field, &toy_point::<T>(target, r), target, target, &inject, 3)
        })
        .collect::<Result<Vec<_>>>()?;

    let search = LeapFactualConfig {
        n_blend: 30,
        euler_steps,
        ..LeapFactualConfig::morpho()
    };
    let codec = IdentityCodec { dim: 2 };
    let mut e = Vec::new();
    for class in [0, 1, 2] {
        let r = sample_residual::<f64, _>(&mut rng, class);
        match leapfactual(&toy_point::<T>(class, r), target, &codec, oracle, field, &search)? {
            LeapOutcome::Done { run, .. } => e.push(run.into_parts().1),
            LeapOutcome::Suspended(_) => return Err(Error::Oracle("toy oracle suspended".into())),
        }
    }

    Ok(vec![
        Fig3Panel {
            name: 'a',
            title: "(a) full leaps, blue to red".into(),
            trajectories: a,
        },
        Fig3Panel {
            name: 'b',
            title: "(b) replacement: shared residual, three classes".into(),
            trajectories: b,
        },
        Fig3Panel {
            name: 'c',
            title: "(c) blending leaps, gamma 0.1".into(),
            trajectories: c,
        },
        Fig3Panel {
            name: 'd',
            title: "(d) injection inside red".into(),
            trajectories: d,
        },
        Fig3Panel {
            name: 'e',
            title: "(e) counterfactual search".into(),
            trajectories: e,
        },
    ])
}

/// Writes `panel_<x>_<i>.jsonl` per trajectory and `panel_<x>.svg` per panel.
pub fn write_fig3(dir: impl AsRef<Path>, panels: &[Fig3Panel]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for p in panels {
        for (i, t) in p.trajectories.iter().enumerate() {
            std::fs::write(dir.join(format!("panel_{}_{i:02}.jsonl", p.name)), t.to_jsonl())?;
        }
        std::fs::write(dir.join(format!("panel_{}.svg", p.name)), panel_svg(&p.title, &p.trajectories))?;
    }
    Ok(())
}

/// Draws `n` (source, target) pairs: a random point of a random class and a
/// different random class.
pub fn toy_queries<T: Scalar>(n: usize, seed: Seed) -> Result<(Matrix<T>, Vec<usize>, Vec<usize>)> {
    let mut rng = seed.stream("toy-queries");
    let mut data = Vec::with_capacity(2 * n);
    let mut sources = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng.random_range(0..TOY_CLASSES);
        let mut t = rng.random_range(0..TOY_CLASSES - 1);
        if t >= s {
            t += 1;
        }
        data.extend(toy_point::<T>(s, sample_residual::<f64, _>(&mut rng, s)));
        sources.push(s);
        targets.push(t);
    }
    Ok((Matrix::from_vec(n, 2, data)?, sources, targets))
}

/// Correctness and similarity of toy counterfactuals. Similarity treats
/// each 2D point as a two-pixel signal with dynamic range 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyScores {
    pub acc: f64,
    pub auc: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEvalRun {
    pub seed: u64,
    pub leapfactual: ToyScores,
    pub leapfactual_r: ToyScores,
}

fn toy_scores(x: &Matrix<f32>, x_ce: &Matrix<f32>, targets: &[usize], classifier: &LocalClassifier<f32>) -> Result<ToyScores> {
    let predicted = classifier.predict_batch(x_ce)?;
    let proba: Vec<Vec<f64>> = classifier
        .proba_batch(x_ce)?
        .iter_rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let n = x.rows() as f64;
    let (mut p, mut s) = (0.0, 0.0);
    for i in 0..x.rows() {
        let (a, b) = (row64(x, i), row64(x_ce, i));
        p += psnr(&a, &b)?;
        s += ssim(&a, &b, 1.0)?;
    }
    Ok(ToyScores {
        acc: accuracy(&predicted, targets)?,
        auc: macro_ovr_auc(&proba, targets, TOY_CLASSES)?,
        psnr: p / n,
        ssim: s / n,
    })
}

/// One seed of the toy evaluation: trains the field and a small classifier,
/// then explains `n_queries` random points in both modes.
pub fn toy_eval_run(config: &ToyPipelineConfig, leap: &LeapFactualConfig, n_queries: usize, seed: Seed) -> Result<ToyEvalRun> {
    let (field, _) = train_toy_field(config, seed)?;
    let classifier = train_toy_classifier(config, seed)?;
    let (x, _, targets) = toy_queries::<f32>(n_queries, seed.derive("toy-eval"))?;
    let explain = |mode| -> Result<ToyScores> {
        let out = leapfactual_batch(&x, &targets, &field, &leap.for_mode(mode), |z| classifier.predict_batch(z))?;
        toy_scores(&x, &out.z, &targets, &classifier)
    };
    Ok(ToyEvalRun {
        seed: seed.0,
        leapfactual: explain(CeMode::Ce)?,
        leapfactual_r: explain(CeMode::Reliable)?,
    })
}

pub fn toy_eval_rows(runs: &[ToyEvalRun]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let arms: [(&str, fn(&ToyEvalRun) -> ToyScores); 2] = [("LeapFactual", |r| r.leapfactual), ("LeapFactual_R", |r| r.leapfactual_r)];
    for (name, get) in arms {
        let col = |f: fn(&ToyScores) -> f64| runs.iter().map(|r| f(&get(r))).collect::<Vec<_>>();
        rows.push(MetricRow::from_runs(format!("ACC:{name}"), &col(|s| s.acc))?);
        rows.push(MetricRow::from_runs(format!("AUC:{name}"), &col(|s| s.auc))?);
        rows.push(MetricRow::from_runs(format!("PSNR:{name}"), &col(|s| s.psnr))?);
        rows.push(MetricRow::from_runs(format!("SSIM:{name}"), &col(|s| s.ssim))?);
    }
    Ok(rows)
}
