//! Dense tensors, feed-forward networks with reverse-mode gradients, Adam,
//! and binary checkpoints.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod matrix;
mod net;

pub use adam::Adam;
pub use matrix::Matrix;
pub use net::{Activation, DenseNet, Layer, NetGrads, Tape};
