use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f32 },
    Silu,
    Sigmoid,
}

impl Activation {
    pub const LEAKY_RELU_02: Activation = Activation::LeakyRelu { slope: 0.2 };

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x >= T::zero() {
                    x
                } else {
                    x * T::lit(slope as f64)
                }
            }
            Activation::Silu => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::LeakyRelu { slope } => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::lit(slope as f64)
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::LeakyRelu { .. } => 1,
            Activation::Silu => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8, slope: f32) -> Option<Self> {
        Some(match tag {
            0 => Activation::Identity,
            1 => Activation::LeakyRelu { slope },
            2 => Activation::Silu,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }

    fn slope(self) -> Option<f32> {
        match self {
            Activation::LeakyRelu { slope } => Some(slope),
            _ => None,
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// One affine layer: `y = x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn zeros_like(&self) -> Self {
        Layer {
            weights: Matrix::zeros(self.fan_in(), self.fan_out()),
            bias: vec![T::zero(); self.bias.len()],
        }
    }
}

/// Fully connected feed-forward network. `hidden` follows every layer but
/// the last, which is followed by `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<T> {
    layers: Vec<Layer<T>>,
    hidden: Activation,
    output: Activation,
}

/// Gradients shaped exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads<T> {
    pub layers: Vec<Layer<T>>,
}

/// Intermediate values kept by [`DenseNet::forward_tape`] for backprop.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    inputs: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
    post: Vec<Matrix<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.post.last().expect("tape of a non-empty net")
    }
}

impl<T: Scalar> DenseNet<T> {
    /// Randomly initialised network. He-uniform for LeakyReLU layers and
    /// Xavier-uniform otherwise; biases start at zero.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, seed: Seed) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = seed.stream("dense-init");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let act = if l + 1 == n { output } else { hidden };
                let bound = match act {
                    Activation::LeakyRelu { slope } => {
                        let a = slope as f64;
                        (2.0 / (1.0 + a * a)).sqrt() * (3.0 / fan_in as f64).sqrt()
                    }
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-bound..bound)))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    /// Network from explicit layers; consecutive dims must chain.
    pub fn from_layers(layers: Vec<Layer<T>>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape("DenseNet::from_layers", l.fan_out(), l.bias.len()));
            }
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::shape("DenseNet::from_layers", w[0].fan_out(), w[1].fan_in()));
            }
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("DenseNet::forward", self.input_dim(), batch.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = x.matmul(&layer.weights)?;
            pre.add_row_inplace(&layer.bias);
            let act = self.activation_for(l);
            x = if act == Activation::Identity {
                pre
            } else {
                pre.map(|v| act.apply(v))
            };
        }
        Ok(x)
    }

    pub fn forward_tape(&self, batch: &Matrix<T>) -> Result<Tape<T>> {
        self.check_input(batch)?;
        let n = self.layers.len();
        let mut tape = Tape {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = x.matmul(&layer.weights)?;
            pre.add_row_inplace(&layer.bias);
            let act = self.activation_for(l);
            let post = pre.map(|v| act.apply(v));
            tape.inputs.push(x);
            tape.pre.push(pre);
            x = post.clone();
            tape.post.push(post);
        }
        Ok(tape)
    }

    /// Gradients of `L = sum(upstream ⊙ forward(batch))` w.r.t. every
    /// parameter and w.r.t. the batch.
    pub fn backward(&self, batch: &Matrix<T>, upstream: &Matrix<T>) -> Result<(NetGrads<T>, Matrix<T>)> {
        let tape = self.forward_tape(batch)?;
        self.backward_tape(&tape, upstream)
    }

    pub fn backward_tape(&self, tape: &Tape<T>, upstream: &Matrix<T>) -> Result<(NetGrads<T>, Matrix<T>)> {
        let out = tape.output();
        if upstream.shape() != out.shape() {
            return Err(Error::shape(
                "DenseNet::backward",
                format!("{:?}", out.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let mut grads: Vec<Layer<T>> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let act = self.activation_for(l);
            let pre = &tape.pre[l];
            let post = &tape.post[l];
            if act != Activation::Identity {
                for ((d, &x), &y) in delta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(pre.as_slice())
                    .zip(post.as_slice())
                {
                    *d *= act.derivative(x, y);
                }
            }
            let dw = tape.inputs[l].t_matmul(&delta)?;
            let db = delta.column_sums();
            let next = delta.matmul_t(&self.layers[l].weights)?;
            grads.push(Layer { weights: dw, bias: db });
            delta = next;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, delta))
    }

    /// Parameter slices in a fixed order (per layer: weights, then bias).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> DenseNet<U> {
        DenseNet {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.cast(),
                    bias: l.bias.iter().map(|&b| U::lit(b.to_f64_lossy())).collect(),
                })
                .collect(),
            hidden: self.hidden,
            output: self.output,
        }
    }

    pub(crate) fn leaky_slope(&self) -> f32 {
        self.hidden.slope().or(self.output.slope()).unwrap_or(0.0)
    }
}

impl<T: Scalar> NetGrads<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        NetGrads {
            layers: net.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.axpy_inplace(T::one(), &b.weights);
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>) -> DenseNet<f64> {
        DenseNet::from_layers(
            vec![Layer {
                weights: Matrix::from_vec(rows, cols, w).unwrap(),
                bias: b,
            }],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn identity_net_is_identity() {
        let layer = |n| Layer {
            weights: Matrix::<f64>::identity(n),
            bias: vec![0.0; n],
        };
        let net = DenseNet::from_layers(vec![layer(3), layer(3)], Activation::Identity, Activation::Identity)
            .unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 3.0, 0.0, -0.25]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn scalar_affine() {
        let net = linear(vec![2.0], 1, 1, vec![1.0]);
        let out = net.forward(&Matrix::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = linear(vec![2.0], 1, 1, vec![1.0]);
        assert!(matches!(net.forward(&Matrix::zeros(1, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = DenseNet::<f64>::new(&[3, 4, 2], Activation::Silu, Activation::Identity, Seed(1)).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.5, 0.9]).unwrap();
        let (g, dx) = net.backward(&x, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.is_zero());
        assert!(dx.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_grads_are_batch_and_ones() {
        let net = linear(vec![0.3, -0.7], 2, 1, vec![0.1]);
        let x = Matrix::from_vec(1, 2, vec![1.5, -2.0]).unwrap();
        let (g, dx) = net.backward(&x, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(g.layers[0].weights.as_slice(), &[1.5, -2.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx.as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn upstream_shape_checked() {
        let net = linear(vec![1.0], 1, 1, vec![0.0]);
        let x = Matrix::zeros(2, 1);
        assert!(net.backward(&x, &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f32), 1.0);
        assert_eq!(sigmoid(-1000.0f32), 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = DenseNet::<f32>::new(&[4, 8, 2], Activation::LEAKY_RELU_02, Activation::Sigmoid, Seed(3)).unwrap();
        let b = DenseNet::<f32>::new(&[4, 8, 2], Activation::LEAKY_RELU_02, Activation::Sigmoid, Seed(3)).unwrap();
        let c = DenseNet::<f32>::new(&[4, 8, 2], Activation::LEAKY_RELU_02, Activation::Sigmoid, Seed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.dims(), vec![4, 8, 2]);
    }
}
