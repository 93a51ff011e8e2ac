//! Generative codecs mapping data space to a latent space and back.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledSet, SampleShape};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::{checkpoint, Activation, Adam, DenseNet, Matrix, NetGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Identity,
    MlpVae,
}

pub trait GenerativeCodec<T: Scalar>: Send + Sync {
    fn kind(&self) -> CodecKind;
    fn latent_dim(&self) -> usize;
    fn input_shape(&self) -> SampleShape;

    /// Deterministic encoding of a batch (one sample per row).
    fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>>;
    fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>>;

    /// Pulls a data-space gradient back through the decoder at `z`.
    fn decode_vjp(&self, z: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>>;

    fn encode_one(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.encode(&Matrix::row_vector(x))?.into_vec())
    }

    fn decode_one(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self.decode(&Matrix::row_vector(z))?.into_vec())
    }
}

/// Codec for worlds where data already lives in latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityCodec {
    pub dim: usize,
}

impl IdentityCodec {
    fn check(&self, m: &Matrix<impl Scalar>) -> Result<()> {
        if m.cols() != self.dim {
            return Err(Error::shape("IdentityCodec", self.dim, m.cols()));
        }
        Ok(())
    }
}

impl<T: Scalar> GenerativeCodec<T> for IdentityCodec {
    fn kind(&self) -> CodecKind {
        CodecKind::Identity
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn input_shape(&self) -> SampleShape {
        SampleShape::Vector { dim: self.dim }
    }

    fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(x)?;
        Ok(x.clone())
    }

    fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(z)?;
        Ok(z.clone())
    }

    fn decode_vjp(&self, z: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(z)?;
        self.check(upstream)?;
        Ok(upstream.clone())
    }
}

/// Dense VAE: the encoder emits `[μ | log σ²]`, the decoder ends in a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpVae<T> {
    pub encoder: DenseNet<T>,
    pub decoder: DenseNet<T>,
    pub shape: SampleShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeTrainConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// MSE weight relative to the KL term; the KL term is scaled by `1/ratio`.
    pub mse_kld_ratio: f64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: vec![256],
            epochs: 100,
            batch_size: 256,
            lr: 5e-3,
            mse_kld_ratio: 4000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss<T> {
    pub total: T,
    pub mse: T,
    pub kld: T,
}

pub struct VaeGrads<T> {
    pub encoder: NetGrads<T>,
    pub decoder: NetGrads<T>,
}

/// Mean over the batch of `KL(N(μ, σ²) || N(0, I))`, summed over latent dims.
pub fn kld<T: Scalar>(mu: &Matrix<T>, logvar: &Matrix<T>) -> T {
    let half = T::lit(0.5);
    let n = T::from_usize(mu.rows().max(1)).unwrap();
    let s: T = mu
        .as_slice()
        .iter()
        .zip(logvar.as_slice())
        .map(|(&m, &lv)| -half * (T::one() + lv - m * m - lv.exp()))
        .sum();
    s / n
}

impl<T: Scalar> MlpVae<T> {
    pub fn new(shape: SampleShape, latent_dim: usize, hidden: &[usize], seed: Seed) -> Result<Self> {
        let mut enc_dims = vec![shape.len()];
        enc_dims.extend(hidden);
        enc_dims.push(2 * latent_dim);
        let mut dec_dims = vec![latent_dim];
        dec_dims.extend(hidden.iter().rev());
        dec_dims.push(shape.len());
        Ok(Self {
            encoder: DenseNet::new(&enc_dims, Activation::LEAKY_RELU_02, Activation::Identity, seed.derive("encoder"))?,
            decoder: DenseNet::new(&dec_dims, Activation::LEAKY_RELU_02, Activation::Sigmoid, seed.derive("decoder"))?,
            shape,
        })
    }

    pub fn from_parts(encoder: DenseNet<T>, decoder: DenseNet<T>, shape: SampleShape) -> Result<Self> {
        if encoder.input_dim() != shape.len() || decoder.output_dim() != shape.len() {
            return Err(Error::shape("MlpVae::from_parts", shape.len(), encoder.input_dim()));
        }
        if encoder.output_dim() != 2 * decoder.input_dim() {
            return Err(Error::shape("MlpVae::from_parts", 2 * decoder.input_dim(), encoder.output_dim()));
        }
        Ok(Self { encoder, decoder, shape })
    }

    fn ld(&self) -> usize {
        self.decoder.input_dim()
    }

    /// `(μ, log σ²)` for a batch.
    pub fn moments(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let out = self.encoder.forward(x)?;
        let l = self.ld();
        Ok((out.col_range(0, l), out.col_range(l, 2 * l)))
    }

    /// Loss and gradients for a batch with explicit reparameterisation noise.
    pub fn loss_with_noise(&self, x: &Matrix<T>, eps: &Matrix<T>, mse_kld_ratio: f64) -> Result<(VaeLoss<T>, VaeGrads<T>)> {
        let l = self.ld();
        if eps.shape() != (x.rows(), l) {
            return Err(Error::shape("vae_loss noise", format!("({}, {l})", x.rows()), format!("{:?}", eps.shape())));
        }
        if mse_kld_ratio <= 0.0 {
            return Err(Error::Config("mse_kld_ratio must be positive".into()));
        }
        let w = T::lit(1.0 / mse_kld_ratio);
        let half = T::lit(0.5);
        let n = T::from_usize(x.rows()).unwrap();

        let enc_tape = self.encoder.forward_tape(x)?;
        let enc_out = enc_tape.output();
        let mu = enc_out.col_range(0, l);
        let logvar = enc_out.col_range(l, 2 * l);
        let std = logvar.map(|v| (half * v).exp());
        let z = mu.zip_map(&std.zip_map(eps, |s, e| s * e)?, |m, se| m + se)?;

        let dec_tape = self.decoder.forward_tape(&z)?;
        let recon = dec_tape.output();
        let count = T::from_usize(recon.as_slice().len().max(1)).unwrap();
        let diff = recon.zip_map(x, |a, b| a - b)?;
        let mse = diff.as_slice().iter().map(|&d| d * d).sum::<T>() / count;
        let kl = kld(&mu, &logvar);

        let two = T::lit(2.0);
        let d_recon = diff.map(|d| two * d / count);
        let (dec_grads, dz) = self.decoder.backward_tape(&dec_tape, &d_recon)?;

        let mut d_enc = Matrix::zeros(x.rows(), 2 * l);
        for r in 0..x.rows() {
            for j in 0..l {
                let m = mu.get(r, j);
                let lv = logvar.get(r, j);
                let g = dz.get(r, j);
                d_enc.set(r, j, g + w * m / n);
                let dlv = g * eps.get(r, j) * half * std.get(r, j) - w * half * (T::one() - lv.exp()) / n;
                d_enc.set(r, l + j, dlv);
            }
        }
        let (enc_grads, _) = self.encoder.backward_tape(&enc_tape, &d_enc)?;
        Ok((
            VaeLoss {
                total: mse + w * kl,
                mse,
                kld: kl,
            },
            VaeGrads {
                encoder: enc_grads,
                decoder: dec_grads,
            },
        ))
    }

    /// Loss with freshly drawn standard-normal noise.
    pub fn vae_loss<R: rand::Rng>(&self, x: &Matrix<T>, mse_kld_ratio: f64, rng: &mut R) -> Result<(VaeLoss<T>, VaeGrads<T>)> {
        let eps = standard_normal(x.rows(), self.ld(), rng);
        self.loss_with_noise(x, &eps, mse_kld_ratio)
    }

    pub fn reconstruction_mse(&self, x: &Matrix<T>) -> Result<f64> {
        let recon = self.decode(&self.encode(x)?)?;
        let n = x.as_slice().len().max(1) as f64;
        Ok(recon
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
            .sum::<f64>()
            / n)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&self.encoder, dir.join("encoder.lfck"))?;
        checkpoint::save(&self.decoder, dir.join("decoder.lfck"))?;
        write_sidecar(dir, &CodecSidecar {
            kind: CodecKind::MlpVae,
            latent_dim: self.ld(),
            input_shape: self.shape,
        })
    }
}

pub(crate) fn standard_normal<T: Scalar, R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| T::lit(StandardNormal.sample(rng)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl<T: Scalar> GenerativeCodec<T> for MlpVae<T> {
    fn kind(&self) -> CodecKind {
        CodecKind::MlpVae
    }

    fn latent_dim(&self) -> usize {
        self.ld()
    }

    fn input_shape(&self) -> SampleShape {
        self.shape
    }

    /// Inference encoding returns μ.
    fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.moments(x)?.0)
    }

    fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.decoder.forward(z)
    }

    fn decode_vjp(&self, z: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.decoder.backward(z, upstream)?.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainLog {
    pub epoch_losses: Vec<f64>,
}

pub fn train_vae<T: Scalar>(dataset: &LabeledSet<T>, config: &VaeTrainConfig, seed: Seed) -> Result<(MlpVae<T>, VaeTrainLog)> {
    if dataset.is_empty() {
        return Err(Error::Empty("VAE training set"));
    }
    if config.batch_size == 0 || config.latent_dim == 0 {
        return Err(Error::Config("batch_size and latent_dim must be positive".into()));
    }
    let mut vae = MlpVae::new(dataset.shape, config.latent_dim, &config.hidden, seed)?;
    let mut enc_opt = Adam::new(T::lit(config.lr));
    let mut dec_opt = Adam::new(T::lit(config.lr));
    let mut shuffle = seed.stream("vae-shuffle");
    let mut noise = seed.stream("vae-noise");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = dataset.samples.select_rows(chunk);
            let (loss, grads) = vae.vae_loss(&x, config.mse_kld_ratio, &mut noise)?;
            enc_opt.step_net(&mut vae.encoder, &grads.encoder)?;
            dec_opt.step_net(&mut vae.decoder, &grads.decoder)?;
            total += loss.total.to_f64_lossy() * chunk.len() as f64;
        }
        if !vae.encoder.is_finite() || !vae.decoder.is_finite() {
            return Err(Error::NonFinite("VAE training".into()));
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok((vae, VaeTrainLog { epoch_losses }))
}

/// JSON description stored next to codec checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSidecar {
    pub kind: CodecKind,
    pub latent_dim: usize,
    pub input_shape: SampleShape,
}

pub(crate) fn write_sidecar(dir: &Path, sidecar: &CodecSidecar) -> Result<()> {
    std::fs::write(dir.join("codec.json"), serde_json::to_vec_pretty(sidecar)?)?;
    Ok(())
}

pub fn save_identity(codec: &IdentityCodec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_sidecar(dir, &CodecSidecar {
        kind: CodecKind::Identity,
        latent_dim: codec.dim,
        input_shape: SampleShape::Vector { dim: codec.dim },
    })
}

/// Codec reloaded from disk.
pub enum LoadedCodec<T> {
    Identity(IdentityCodec),
    Vae(MlpVae<T>),
}

impl<T: Scalar> LoadedCodec<T> {
    pub fn as_dyn(&self) -> &dyn GenerativeCodec<T> {
        match self {
            LoadedCodec::Identity(c) => c,
            LoadedCodec::Vae(v) => v,
        }
    }

    pub fn into_boxed(self) -> Box<dyn GenerativeCodec<T>> {
        match self {
            LoadedCodec::Identity(c) => Box::new(c),
            LoadedCodec::Vae(v) => Box::new(v),
        }
    }
}

pub fn load_codec<T: Scalar>(dir: impl AsRef<Path>) -> Result<LoadedCodec<T>> {
    let dir = dir.as_ref();
    let sidecar: CodecSidecar = serde_json::from_slice(&std::fs::read(dir.join("codec.json"))?)?;
    match sidecar.kind {
        CodecKind::Identity => Ok(LoadedCodec::Identity(IdentityCodec { dim: sidecar.latent_dim })),
        CodecKind::MlpVae => {
            let vae = MlpVae::from_parts(
                checkpoint::load(dir.join("encoder.lfck"))?,
                checkpoint::load(dir.join("decoder.lfck"))?,
                sidecar.input_shape,
            )?;
            if vae.latent_dim() != sidecar.latent_dim {
                return Err(Error::Checkpoint("latent_dim disagrees with sidecar".into()));
            }
            Ok(LoadedCodec::Vae(vae))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kld_closed_forms() {
        let z = Matrix::<f64>::zeros(1, 2);
        assert_eq!(kld(&z, &z), 0.0);
        let mu = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert!((kld(&mu, &z) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_codec_is_exact() {
        let c = IdentityCodec { dim: 2 };
        let v = [0.3f32, -0.1];
        assert_eq!(GenerativeCodec::<f32>::encode_one(&c, &v).unwrap(), v.to_vec());
        assert_eq!(GenerativeCodec::<f32>::decode_one(&c, &v).unwrap(), v.to_vec());
        assert!(GenerativeCodec::<f32>::encode_one(&c, &[1.0]).is_err());
    }

    fn tiny_vae() -> MlpVae<f64> {
        MlpVae::new(SampleShape::Vector { dim: 5 }, 2, &[6], Seed(3)).unwrap()
    }

    #[test]
    fn vae_loss_gradients_match_finite_differences() {
        let vae = tiny_vae();
        let x = Matrix::from_vec(2, 5, (0..10).map(|i| (i as f64 * 0.13).fract()).collect()).unwrap();
        let eps = Matrix::from_vec(2, 2, vec![0.3, -1.1, 0.7, 0.2]).unwrap();
        let ratio = 3.0;
        let (_, grads) = vae.loss_with_noise(&x, &eps, ratio).unwrap();
        let h = 1e-6;
        let eval = |v: &MlpVae<f64>| v.loss_with_noise(&x, &eps, ratio).unwrap().0.total;
        for (which, analytic) in [(0, &grads.encoder), (1, &grads.decoder)] {
            let flat: Vec<f64> = analytic.slices().iter().flat_map(|s| s.iter().copied()).collect();
            for (k, g) in flat.iter().enumerate().step_by(3) {
                let bump = |delta: f64| {
                    let mut v = vae.clone();
                    let net = if which == 0 { &mut v.encoder } else { &mut v.decoder };
                    let mut i = k;
                    for s in net.param_slices_mut() {
                        if i < s.len() {
                            s[i] += delta;
                            break;
                        }
                        i -= s.len();
                    }
                    eval(&v)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((fd - g).abs() <= 1e-6 + 1e-4 * fd.abs(), "net {which} param {k}: fd {fd} vs {g}");
            }
        }
    }

    #[test]
    fn perfect_reconstruction_with_prior_moments_has_zero_loss() {
        // Decoder output fixed at sigmoid(0)=0.5 and encoder output zero.
        let mut vae = tiny_vae();
        for net in [&mut vae.encoder, &mut vae.decoder] {
            for s in net.param_slices_mut() {
                s.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = Matrix::filled(3, 5, 0.5);
        let eps = Matrix::zeros(3, 2);
        let (loss, _) = vae.loss_with_noise(&x, &eps, 4000.0).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.kld, 0.0);
    }

    #[test]
    fn decoder_output_in_unit_interval() {
        let vae = MlpVae::<f32>::new(SampleShape::Image { rows: 4, cols: 4 }, 3, &[8], Seed(1)).unwrap();
        let mut rng = Seed(2).stream("z");
        let z = standard_normal::<f32, _>(1000, 3, &mut rng).map(|v| v * 5.0);
        let x = vae.decode(&z).unwrap();
        assert!(x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn memorises_a_single_image() {
        let img: Vec<f32> = (0..16).map(|i| if i % 3 == 0 { 0.9 } else { 0.1 }).collect();
        let rows: Vec<Vec<f32>> = (0..64).map(|_| img.clone()).collect();
        let set = LabeledSet::new(
            Matrix::from_rows(&rows).unwrap(),
            vec![0; 64],
            1,
            SampleShape::Image { rows: 4, cols: 4 },
        )
        .unwrap();
        let cfg = VaeTrainConfig {
            latent_dim: 2,
            hidden: vec![16],
            epochs: 150,
            batch_size: 16,
            lr: 5e-3,
            mse_kld_ratio: 4000.0,
        };
        let (vae, log) = train_vae(&set, &cfg, Seed(5)).unwrap();
        assert!(log.epoch_losses.last().unwrap() < &log.epoch_losses[0]);
        assert!(vae.reconstruction_mse(&set.samples).unwrap() < 1e-3);
    }

    #[test]
    fn save_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let vae = MlpVae::<f32>::new(SampleShape::Image { rows: 2, cols: 3 }, 2, &[4], Seed(1)).unwrap();
        vae.save(dir.path()).unwrap();
        let LoadedCodec::Vae(back) = load_codec::<f32>(dir.path()).unwrap() else { panic!() };
        assert_eq!(back, vae);
        save_identity(&IdentityCodec { dim: 2 }, dir.path().join("id")).unwrap();
        assert!(matches!(load_codec::<f32>(dir.path().join("id")).unwrap(), LoadedCodec::Identity(IdentityCodec { dim: 2 })));
    }
}
