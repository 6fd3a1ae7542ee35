//! Fully connected regression networks.
//!
//! Hidden layers use ReLU, the output layer is linear and produces a single
//! scalar. Parameters are stored row-major (`out_dim x in_dim`) per layer.

mod adam;
mod grad_check;
mod train;

pub use adam::{adam_step, AdamState};
pub use grad_check::grad_check;
pub use train::{train, train_with_history, FreezeMask, TrainConfig};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }
}

/// One affine layer followed by an activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero bias.
    pub fn he_uniform(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `out = act(W x + b)` for `n` rows of `input`.
    fn forward_into(&self, input: &[f64], n: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(n * self.out_dim);
        for x in input.chunks_exact(self.in_dim).take(n) {
            for (w, b) in self.weights.chunks_exact(self.in_dim).zip(&self.bias) {
                out.push(self.activation.apply(dot(w, x) + b));
            }
        }
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Ordered layers of a feedforward regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// Validates shapes and activations: dims chain, hidden layers are ReLU,
    /// the last layer is linear with a single output.
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or(Error::InvalidArgument("network has no layers".into()))?;
        for (j, l) in self.layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::InvalidArgument(format!("layer {j} has a zero dimension")));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::InvalidArgument(format!(
                    "layer {j} buffers do not match its shape"
                )));
            }
            if j > 0 && l.in_dim != self.layers[j - 1].out_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.layers[j - 1].out_dim,
                    got: l.in_dim,
                });
            }
            let want = if j + 1 == self.layers.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            if l.activation != want {
                return Err(Error::InvalidArgument(format!(
                    "layer {j} must use {want:?} activation"
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        if last.out_dim != 1 {
            return Err(Error::InvalidArgument("output layer must have one unit".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Node counts `[input, hidden..., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerParams::n_params).sum()
    }

    fn check_input(&self, len: usize, n: usize) -> Result<()> {
        let d = self.input_dim();
        if len != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_batch(x, 1)?[0])
    }

    /// Predictions for `n` row-major inputs.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(x.len(), n)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, n, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Post-activation outputs of every layer, last entry is the prediction.
    fn forward_trace(&self, x: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (j, l) in self.layers.iter().enumerate() {
            let input = if j == 0 { x } else { &acts[j - 1] };
            let mut out = Vec::new();
            l.forward_into(input, n, &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkParams = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// He-uniform network with ReLU hidden layers and a linear output.
///
/// `layer_dims` lists node counts from input to output, so `[3, 8, 8, 1]`
/// yields three weight layers.
pub fn init_network(layer_dims: &[usize], seed: u64) -> Result<NetworkParams> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("zero dim in {layer_dims:?}")));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::InvalidArgument("output dim must be 1".into()));
    }
    let mut rng = rng::seeded(seed, rng::STREAM_INIT);
    let last = layer_dims.len() - 2;
    let layers = layer_dims
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let act = if j == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            LayerParams::he_uniform(w[0], w[1], act, &mut rng)
        })
        .collect();
    NetworkParams::new(layers)
}

/// Mean squared error.
pub fn mse_loss(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("mse_loss"));
    }
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Gradient (or optimizer moment) buffers for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTensors {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerTensors {
    pub fn zeros_like(l: &LayerParams) -> Self {
        Self {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        }
    }
}

/// Loss gradients, one entry per layer of the network they were taken on.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerTensors>,
}

/// Batch MSE and its exact gradient with respect to every parameter.
///
/// ReLU has subgradient 0 at 0. Gradients are produced for all layers; a
/// freeze mask is applied by the optimizer, not here.
pub fn backward(net: &NetworkParams, batch_x: &[f64], batch_y: &[f64]) -> Result<(f64, Gradients)> {
    let n = batch_y.len();
    if n == 0 {
        return Err(Error::Empty("backward batch"));
    }
    net.check_input(batch_x.len(), n)?;
    let acts = net.forward_trace(batch_x, n);
    let pred = acts.last().unwrap();
    let loss = mse_loss(batch_y, pred)?;

    let scale = 2.0 / n as f64;
    let mut delta: Vec<f64> = pred.iter().zip(batch_y).map(|(p, y)| scale * (p - y)).collect();
    let mut grads: Vec<LayerTensors> = net.layers.iter().map(LayerTensors::zeros_like).collect();

    for j in (0..net.layers.len()).rev() {
        let layer = &net.layers[j];
        let input: &[f64] = if j == 0 { batch_x } else { &acts[j - 1] };
        let (din, dout) = (layer.in_dim, layer.out_dim);
        let g = &mut grads[j];
        let mut prev = if j > 0 { vec![0.0; n * din] } else { Vec::new() };
        for s in 0..n {
            let x = &input[s * din..(s + 1) * din];
            for o in 0..dout {
                let d = delta[s * dout + o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                axpy(&mut g.weights[o * din..(o + 1) * din], d, x);
                if j > 0 {
                    axpy(
                        &mut prev[s * din..(s + 1) * din],
                        d,
                        &layer.weights[o * din..(o + 1) * din],
                    );
                }
            }
        }
        if j > 0 {
            // previous layer is ReLU: pass gradient only where its output was positive
            for (p, a) in prev.iter_mut().zip(&acts[j - 1]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((loss, Gradients { layers: grads }))
}

/// On-disk network record: parameters plus the config and seed that made them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedNetwork {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub network: NetworkParams,
    pub config: TrainConfig,
    pub seed: u64,
}

impl SavedNetwork {
    pub fn new(network: NetworkParams, config: TrainConfig, seed: u64) -> Self {
        Self {
            dims: network.dims(),
            activations: network.layers.iter().map(|l| l.activation).collect(),
            network,
            config,
            seed,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let saved: SavedNetwork = serde_json::from_str(&text)?;
        saved.network.validate()?;
        if saved.dims != saved.network.dims() {
            return Err(Error::InvalidArgument(format!(
                "{}: dims header does not match layers",
                path.display()
            )));
        }
        Ok(saved)
    }
}
