//! Class-conditioned flow matching over a latent space.
//!
//! Training pairs couple a standard-normal draw `z0` with a latent `z1`
//! sampled from the bucket of the class the classifier predicted. Along the
//! straight path `z_t = (1 − t) z0 + t z1 (+ σ ε)` the network regresses the
//! constant velocity `z1 − z0`, conditioned on `(t, class)`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LatentBank;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::{checkpoint, Activation, Adam, DenseNet, Matrix, NetGrads};

#[derive(Debug, Clone, PartialEq)]
pub struct CfmSample<T> {
    pub t: T,
    pub z: Vec<T>,
    pub class: usize,
    pub target: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfmTrainConfig {
    pub sigma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub latent_dim: usize,
    pub n_classes: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub schedule: LrSchedule,
}

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero across all optimizer steps.
    Cosine,
}

impl LrSchedule {
    pub fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos()),
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}

impl CfmTrainConfig {
    /// Learning rate 0.005, batch 256, 30 epochs, σ = 0.
    pub fn reference(latent_dim: usize, n_classes: usize) -> Self {
        Self {
            sigma: 0.0,
            epochs: 30,
            batch_size: 256,
            lr: 0.005,
            latent_dim,
            n_classes,
            hidden: default_hidden(),
            schedule: LrSchedule::Constant,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be a non-negative real, got {}", self.sigma)));
        }
        if self.batch_size == 0 || self.latent_dim == 0 || self.n_classes == 0 {
            return Err(Error::Config("batch_size, latent_dim and n_classes must be positive".into()));
        }
        Ok(())
    }
}

/// Learned velocity field `v(t, z, c)`. Network input layout is
/// `[z | t | one_hot(c)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    net: DenseNet<T>,
    latent_dim: usize,
    n_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSidecar {
    pub latent_dim: usize,
    pub n_classes: usize,
    pub sigma: f64,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(latent_dim: usize, n_classes: usize, hidden: &[usize], seed: Seed) -> Result<Self> {
        let mut dims = vec![latent_dim + 1 + n_classes];
        dims.extend(hidden);
        dims.push(latent_dim);
        let net = DenseNet::new(&dims, Activation::Silu, Activation::Identity, seed.derive("flow"))?;
        Ok(Self {
            net,
            latent_dim,
            n_classes,
        })
    }

    pub fn from_net(net: DenseNet<T>, latent_dim: usize, n_classes: usize) -> Result<Self> {
        if net.input_dim() != latent_dim + 1 + n_classes || net.output_dim() != latent_dim {
            return Err(Error::shape(
                "FlowField::from_net",
                format!("{} -> {latent_dim}", latent_dim + 1 + n_classes),
                format!("{} -> {}", net.input_dim(), net.output_dim()),
            ));
        }
        Ok(Self {
            net,
            latent_dim,
            n_classes,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn net(&self) -> &DenseNet<T> {
        &self.net
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.n_classes {
            return Err(Error::LabelRange {
                label: class,
                n_classes: self.n_classes,
            });
        }
        Ok(())
    }

    /// Builds the network input for rows of `z` with per-row times and classes.
    pub fn input(&self, times: &[T], z: &Matrix<T>, classes: &[usize]) -> Result<Matrix<T>> {
        if z.cols() != self.latent_dim {
            return Err(Error::shape("FlowField::input", self.latent_dim, z.cols()));
        }
        if times.len() != z.rows() || classes.len() != z.rows() {
            return Err(Error::shape("FlowField::input", z.rows(), times.len().min(classes.len())));
        }
        let width = self.latent_dim + 1 + self.n_classes;
        let mut data = Vec::with_capacity(z.rows() * width);
        for r in 0..z.rows() {
            self.check_class(classes[r])?;
            data.extend_from_slice(z.row(r));
            data.push(times[r]);
            data.extend((0..self.n_classes).map(|k| if k == classes[r] { T::one() } else { T::zero() }));
        }
        Matrix::from_vec(z.rows(), width, data)
    }

    /// Field evaluated at a shared time for a batch of latents.
    pub fn eval_batch(&self, t: T, z: &Matrix<T>, classes: &[usize]) -> Result<Matrix<T>> {
        let times = vec![t; z.rows()];
        self.net.forward(&self.input(&times, z, classes)?)
    }

    pub fn eval(&self, t: T, z: &[T], class: usize) -> Result<Vec<T>> {
        Ok(self.eval_batch(t, &Matrix::row_vector(z), &[class])?.into_vec())
    }

    pub fn save(&self, dir: impl AsRef<Path>, sigma: f64) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&self.net, dir.join("flow.lfck"))?;
        let sidecar = FlowSidecar {
            latent_dim: self.latent_dim,
            n_classes: self.n_classes,
            sigma,
        };
        std::fs::write(dir.join("flow.json"), serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, FlowSidecar)> {
        let dir = dir.as_ref();
        let sidecar: FlowSidecar = serde_json::from_slice(&std::fs::read(dir.join("flow.json"))?)?;
        let net = checkpoint::load(dir.join("flow.lfck"))?;
        Ok((Self::from_net(net, sidecar.latent_dim, sidecar.n_classes)?, sidecar))
    }
}

/// `z0 ~ N(0, I)` and `z1` uniform from the class bucket, independently.
pub fn sample_pair<T: Scalar, R: Rng>(class: usize, bank: &LatentBank<T>, rng: &mut R) -> Result<(Vec<T>, Vec<T>)> {
    let z1 = bank.draw(class, rng)?.to_vec();
    let z0 = (0..bank.latent_dim())
        .map(|_| T::lit(StandardNormal.sample(rng)))
        .collect();
    Ok((z0, z1))
}

/// Probability-path sample at an explicit time and noise draw.
pub fn make_sample_at<T: Scalar>(z0: &[T], z1: &[T], class: usize, sigma: T, t: T, noise: &[T]) -> Result<CfmSample<T>> {
    if z0.len() != z1.len() || noise.len() != z0.len() {
        return Err(Error::shape("make_sample", z0.len(), z1.len().min(noise.len())));
    }
    let one = T::one();
    let z = z0
        .iter()
        .zip(z1)
        .zip(noise)
        .map(|((&a, &b), &e)| (one - t) * a + t * b + sigma * e)
        .collect();
    let target = z0.iter().zip(z1).map(|(&a, &b)| b - a).collect();
    Ok(CfmSample { t, z, class, target })
}

/// `t ~ U[0, 1]`, `z = (1 − t) z0 + t z1 + σ ε`, target `z1 − z0`.
pub fn make_sample<T: Scalar, R: Rng>(z0: &[T], z1: &[T], class: usize, sigma: T, rng: &mut R) -> Result<CfmSample<T>> {
    let t = T::lit(rng.random::<f64>());
    let noise: Vec<T> = if sigma.is_zero() {
        vec![T::zero(); z0.len()]
    } else {
        (0..z0.len()).map(|_| T::lit(StandardNormal.sample(rng))).collect()
    };
    make_sample_at(z0, z1, class, sigma, t, &noise)
}

/// Mean over the batch of `‖v(t, z, c) − target‖²`, with parameter gradients.
pub fn cfm_loss<T: Scalar>(field: &FlowField<T>, batch: &[CfmSample<T>]) -> Result<(T, NetGrads<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("flow matching batch"));
    }
    let d = field.latent_dim;
    let mut zdata = Vec::with_capacity(batch.len() * d);
    let mut tdata = Vec::with_capacity(batch.len() * d);
    for s in batch {
        if s.z.len() != d || s.target.len() != d {
            return Err(Error::shape("cfm_loss", d, s.z.len()));
        }
        zdata.extend_from_slice(&s.z);
        tdata.extend_from_slice(&s.target);
    }
    let z = Matrix::from_vec(batch.len(), d, zdata)?;
    let target = Matrix::from_vec(batch.len(), d, tdata)?;
    let times: Vec<T> = batch.iter().map(|s| s.t).collect();
    let classes: Vec<usize> = batch.iter().map(|s| s.class).collect();
    let input = field.input(&times, &z, &classes)?;
    let tape = field.net.forward_tape(&input)?;
    let diff = tape.output().zip_map(&target, |a, b| a - b)?;
    let n = T::from_usize(batch.len()).unwrap();
    let loss = diff.as_slice().iter().map(|&v| v * v).sum::<T>() / n;
    let two = T::lit(2.0);
    let upstream = diff.map(|v| two * v / n);
    let (grads, _) = field.net.backward_tape(&tape, &upstream)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowTrainLog {
    pub epochs: Vec<EpochLoss>,
}

impl FlowTrainLog {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for e in &self.epochs {
            writeln!(w, "{},{}", e.epoch, e.loss)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Trains a field on a class-keyed latent bank. One epoch visits every bank
/// entry once (shuffled) and uses its predicted label as the condition.
pub fn train_flow<T: Scalar>(bank: &LatentBank<T>, config: &CfmTrainConfig, seed: Seed) -> Result<(FlowField<T>, FlowTrainLog)> {
    config.validate()?;
    if bank.is_empty() {
        return Err(Error::Empty("latent bank"));
    }
    if bank.latent_dim() != config.latent_dim || bank.n_classes() != config.n_classes {
        return Err(Error::shape(
            "train_flow",
            format!("latent_dim {} / {} classes", config.latent_dim, config.n_classes),
            format!("latent_dim {} / {} classes", bank.latent_dim(), bank.n_classes()),
        ));
    }
    if let Some(&class) = bank.empty_classes().first() {
        return Err(Error::ClassCoverage { class });
    }
    let mut field = FlowField::new(config.latent_dim, config.n_classes, &config.hidden, seed)?;
    let mut adam = Adam::new(T::lit(config.lr));
    let mut order_rng = seed.stream("flow-order");
    let mut pair_rng = seed.stream("flow-pairs");
    let sigma = T::lit(config.sigma);
    let mut order: Vec<usize> = (0..bank.len()).collect();
    let mut log = FlowTrainLog::default();
    let total_steps = config.epochs * bank.len().div_ceil(config.batch_size);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    let class = bank.labels()[i];
                    let (z0, z1) = sample_pair(class, bank, &mut pair_rng)?;
                    make_sample(&z0, &z1, class, sigma, &mut pair_rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = cfm_loss(&field, &batch)?;
            adam.lr = T::lit(config.lr * config.schedule.factor(step, total_steps));
            step += 1;
            adam.step_net(&mut field.net, &grads)?;
            total += loss.to_f64_lossy() * chunk.len() as f64;
        }
        if !field.net.is_finite() {
            return Err(Error::NonFinite(format!("flow training, epoch {epoch}")));
        }
        log.epochs.push(EpochLoss {
            epoch,
            loss: total / bank.len() as f64,
        });
    }
    Ok((field, log))
}
