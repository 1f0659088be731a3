//! Small dense feedforward networks: autoencoders, frame classifiers,
//! context splicing and PCA.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, sqrt};
use crate::matrix::{FeatureMatrix, Matrix};
use crate::rng::{derive_seed, normal, rng_from, SeededRng};

mod pca;
mod train;

pub use pca::{pca_fit, pca_project, PcaProjection};
pub use train::{
    objective_gradient, train_autoencoder, train_classifier, train_classifier_spliced, Gradient, Loss, Targets,
    TrainConfig, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    /// Stable on-disk code.
    pub fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Softmax => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Softmax,
            _ => return Err(Error::InvalidConfig(format!("unknown activation code {code}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    /// Applies the nonlinearity to one row of pre-activations in place.
    fn apply(self, row: &mut [f64]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => row.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Sigmoid => row.iter_mut().for_each(|x| *x = sigmoid(*x)),
            Activation::Softmax => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = exp(*x - max);
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
    }

    /// Derivative expressed through the activation's output; softmax is
    /// only ever paired with cross-entropy and never differentiated alone.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear | Activation::Softmax => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Affine map `y = f(x W + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::DimMismatch {
                expected: weights.cols(),
                found: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `x W + b` then the activation, for every row of `x`.
    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        let w = &self.weights;
        for (xr, orow) in x
            .row_iter()
            .zip(out.as_mut_slice().chunks_exact_mut(self.output_dim().max(1)))
        {
            orow.copy_from_slice(&self.bias);
            for (k, &a) in xr.iter().enumerate() {
                if a != 0.0 {
                    crate::math::axpy(a, w.row(k), orow);
                }
            }
            self.activation.apply(orow);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network without layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimMismatch {
                    expected: pair[0].output_dim(),
                    found: pair[1].input_dim(),
                });
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidConfig(format!("layer {i} has non-finite parameters")));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::InvalidConfig(
                    "softmax is only allowed on the output layer".into(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Seeded random initialisation: He for ReLU layers, Xavier otherwise; zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_from(derive_seed(seed, "mlp-init"));
        let dims = arch.dims();
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = arch.activation_of(i);
                let std = match act {
                    Activation::Relu => sqrt(2.0 / d[0] as f64),
                    _ => sqrt(2.0 / (d[0] + d[1]) as f64),
                };
                let w = Matrix::from_fn(d[0], d[1], |_, _| std * normal(&mut rng));
                Layer::new(w, vec![0.0; d[1]], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn architecture(&self) -> Architecture {
        let hidden = &self.layers[..self.layers.len() - 1];
        Architecture {
            input_dim: self.input_dim(),
            hidden: hidden.iter().map(Layer::output_dim).collect(),
            hidden_activation: hidden.first().map_or(Activation::Relu, |l| l.activation),
            output_dim: self.output_dim(),
            output_activation: self.layers[self.layers.len() - 1].activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Euclidean distance between two same-shaped networks' parameters.
    pub fn parameter_distance(&self, other: &Mlp) -> Result<f64> {
        if self.architecture() != other.architecture() {
            return Err(Error::ShapeMismatch("networks differ in architecture".into()));
        }
        let mut acc = 0.0;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
                acc += (x - y) * (x - y);
            }
            for (x, y) in a.bias.iter().zip(&b.bias) {
                acc += (x - y) * (x - y);
            }
        }
        Ok(sqrt(acc))
    }

    pub(crate) fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Deterministic forward pass, no dropout.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.run(x, self.layers.len()))
    }

    fn run(&self, x: &Matrix, depth: usize) -> Matrix {
        let mut h = self.layers[0].forward(x);
        for l in &self.layers[1..depth] {
            h = l.forward(&h);
        }
        h
    }
}

/// Layer widths and activations of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_dim: usize,
    pub output_activation: Activation,
}

impl Architecture {
    /// `dim → [width; depth] → dim`, ReLU hidden, linear output.
    pub fn autoencoder(dim: usize, width: usize, depth: usize) -> Self {
        Self {
            input_dim: dim,
            hidden: vec![width; depth],
            hidden_activation: Activation::Relu,
            output_dim: dim,
            output_activation: Activation::Linear,
        }
    }

    /// Sigmoid hidden layers and a softmax over `classes`.
    pub fn classifier(input_dim: usize, width: usize, depth: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![width; depth],
            hidden_activation: Activation::Sigmoid,
            output_dim: classes,
            output_activation: Activation::Softmax,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.output_dim);
        d
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer == self.hidden.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        if self.hidden_activation == Activation::Softmax {
            return Err(Error::InvalidConfig("softmax hidden layers".into()));
        }
        Ok(())
    }
}

/// Inverted dropout on hidden-layer outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

/// Per-frame forward pass. With `dropout = None` the result is
/// deterministic and seed-independent.
pub fn forward(net: &Mlp, batch: &FeatureMatrix, dropout: Option<Dropout>) -> Result<FeatureMatrix> {
    net.check_input(&batch.frames)?;
    let out = match dropout {
        None => net.run(&batch.frames, net.layers.len()),
        Some(d) => {
            let mut rng = rng_from(derive_seed(d.seed, "dropout"));
            forward_cached(net, &batch.frames, d.rate, Some(&mut rng))
                .output()
                .clone()
        }
    };
    Ok(batch.with_frames(out))
}

/// Output of hidden layer `layer_index` (1-based) after its nonlinearity.
pub fn hidden_activations(net: &Mlp, feat: &FeatureMatrix, layer_index: usize) -> Result<FeatureMatrix> {
    if layer_index == 0 || layer_index > net.hidden_layers() {
        return Err(Error::IndexOutOfRange {
            index: layer_index,
            limit: net.hidden_layers(),
        });
    }
    net.check_input(&feat.frames)?;
    Ok(feat.with_frames(net.run(&feat.frames, layer_index)))
}

/// Activations retained for backpropagation.
pub(crate) struct Cache {
    /// `outputs[0]` is the input; `outputs[l + 1]` is layer `l`'s output after dropout.
    pub outputs: Vec<Matrix>,
    /// `f'(z) · mask` per layer, same shape as that layer's output.
    pub derivs: Vec<Matrix>,
}

impl Cache {
    pub fn output(&self) -> &Matrix {
        &self.outputs[self.outputs.len() - 1]
    }
}

pub(crate) fn forward_cached(net: &Mlp, x: &Matrix, rate: f64, mut rng: Option<&mut SeededRng>) -> Cache {
    use rand::Rng;
    let n = net.layers.len();
    let mut outputs = Vec::with_capacity(n + 1);
    let mut derivs = Vec::with_capacity(n);
    outputs.push(x.clone());
    for (i, l) in net.layers.iter().enumerate() {
        let mut h = l.forward(&outputs[i]);
        let mut d = h.clone();
        d.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = l.activation.derivative_from_output(*v));
        if i + 1 < n && rate > 0.0 {
            if let Some(rng) = rng.as_deref_mut() {
                let keep = 1.0 / (1.0 - rate);
                for (hv, dv) in h.as_mut_slice().iter_mut().zip(d.as_mut_slice()) {
                    let m = if rng.random::<f64>() < rate { 0.0 } else { keep };
                    *hv *= m;
                    *dv *= m;
                }
            }
        }
        outputs.push(h);
        derivs.push(d);
    }
    Cache { outputs, derivs }
}

/// Concatenates frames `t−left ..= t+right` per frame, replicating edge frames.
pub fn splice_context(feat: &FeatureMatrix, left: usize, right: usize) -> FeatureMatrix {
    let (t_len, d) = (feat.num_frames(), feat.dim());
    let width = (left + right + 1) * d;
    let mut out = Matrix::zeros(t_len, width);
    for t in 0..t_len {
        splice_row(&feat.frames, t, left, right, out.row_mut(t));
    }
    feat.with_frames(out)
}

pub(crate) fn splice_row(frames: &Matrix, t: usize, left: usize, right: usize, out: &mut [f64]) {
    let d = frames.cols();
    let last = frames.rows() - 1;
    for (k, chunk) in out.chunks_exact_mut(d).enumerate().take(left + right + 1) {
        let src = (t + k).saturating_sub(left).min(last);
        chunk.copy_from_slice(frames.row(src));
    }
}
