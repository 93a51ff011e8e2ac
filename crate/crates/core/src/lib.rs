//! Counterfactual explanations from class-conditioned flow matching.
//!
//! A flow is trained over a generative model's latent space, conditioned on
//! the label a classifier assigns. Lifting a latent toward the prior strips
//! class information; landing it under another class re-injects it. Repeated
//! partial leaps blend source and target classes, and leaps that land harder
//! than they lift push a sample deeper into the target class.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations.

pub mod codec;
pub mod data;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
pub use rng::Seed;
pub use scalar::Scalar;

pub type Matrix32 = tensor::Matrix<f32>;
pub type Matrix64 = tensor::Matrix<f64>;
pub type DenseNet32 = tensor::DenseNet<f32>;
pub type DenseNet64 = tensor::DenseNet<f64>;
pub type FlowField32 = flow::FlowField<f32>;
pub type FlowField64 = flow::FlowField<f64>;
pub type MlpVae32 = codec::MlpVae<f32>;
pub type MlpVae64 = codec::MlpVae<f64>;
pub type LocalClassifier32 = oracle::LocalClassifier<f32>;
pub type LocalClassifier64 = oracle::LocalClassifier<f64>;
pub type LatentBank32 = data::LatentBank<f32>;
pub type LatentBank64 = data::LatentBank<f64>;
pub type LabeledSet32 = data::LabeledSet<f32>;
pub type LabeledSet64 = data::LabeledSet<f64>;
pub type LeapRun32 = transport::LeapRun<f32>;
pub type LeapRun64 = transport::LeapRun<f64>;
