use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, AdamState, NetworkParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Mini-batch Adam settings. Defaults: 30 epochs, batch 64, lr 0.001.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_adam: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::OutOfRange {
                name: "learning_rate",
                value: self.learning_rate,
            });
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::OutOfRange { name, value: b });
            }
        }
        Ok(())
    }
}

/// Per-layer trainability flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    trainable: Vec<bool>,
}

impl FreezeMask {
    pub fn new(trainable: Vec<bool>) -> Result<Self> {
        if !trainable.iter().any(|&t| t) {
            return Err(Error::InvalidArgument("freeze mask leaves no trainable layer".into()));
        }
        Ok(Self { trainable })
    }

    pub fn all(n_layers: usize) -> Self {
        Self {
            trainable: vec![true; n_layers],
        }
    }

    /// Only the listed layer indices are trainable.
    pub fn only(n_layers: usize, layers: &[usize]) -> Result<Self> {
        let mut t = vec![false; n_layers];
        for &j in layers {
            if j >= n_layers {
                return Err(Error::InvalidArgument(format!("layer {j} out of {n_layers}")));
            }
            t[j] = true;
        }
        Self::new(t)
    }

    pub fn len(&self) -> usize {
        self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainable.is_empty()
    }

    pub fn is_trainable(&self, layer: usize) -> bool {
        self.trainable[layer]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.trainable
    }
}

/// Trains `net` on `ds` and returns the final parameters.
pub fn train(net: &NetworkParams, ds: &Dataset, cfg: &TrainConfig, mask: &FreezeMask) -> Result<NetworkParams> {
    Ok(train_with_history(net, ds, cfg, mask)?.0)
}

/// Like [`train`], also returning the mean batch loss of every epoch.
///
/// Each epoch reshuffles the rows once from the run seed and walks them in
/// batches of `batch_size`; the last batch of an epoch may be short.
pub fn train_with_history(
    net: &NetworkParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    mask: &FreezeMask,
) -> Result<(NetworkParams, Vec<f64>)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::NoRows);
    }
    if ds.n_features() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: ds.n_features(),
        });
    }
    if mask.len() != net.n_layers() {
        return Err(Error::DimensionMismatch {
            expected: net.n_layers(),
            got: mask.len(),
        });
    }
    let d = ds.n_features();
    let mut net = net.clone();
    let mut state = AdamState::new(&net);
    let mut rng = rng::seeded(cfg.seed, rng::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * d);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(ds.row(i));
                by.push(ds.targets()[i]);
            }
            let (loss, grads) = backward(&net, &bx, &by)?;
            adam_step(&mut net, &grads, &mut state, mask, cfg)?;
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    if net
        .layers
        .iter()
        .any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("trained parameters"));
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSchema;
    use crate::nn::{init_network, mse_loss};
    use rand::Rng;

    fn line_data(n: usize) -> Dataset {
        let mut r = rng::seeded(11, 0);
        let schema = FeatureSchema::new(["x"], "y").unwrap();
        let xs: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let ys = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        Dataset::from_flat(schema, xs, ys).unwrap()
    }

    #[test]
    fn fits_a_line() {
        let ds = line_data(200);
        let net = init_network(&[1, 16, 16, 1], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let trained = train(&net, &ds, &cfg, &FreezeMask::all(3)).unwrap();
        let pred = trained.forward_batch(ds.features(), ds.n_rows()).unwrap();
        let mse = mse_loss(ds.targets(), &pred).unwrap();
        assert!(mse < 1e-2, "mse = {mse}");
    }

    #[test]
    fn frozen_hidden_layers_are_bit_identical() {
        let ds = line_data(100);
        let net = init_network(&[1, 8, 8, 1], 4).unwrap();
        let mask = FreezeMask::only(3, &[2]).unwrap();
        let trained = train(&net, &ds, &TrainConfig::default(), &mask).unwrap();
        assert_eq!(trained.layers[0], net.layers[0]);
        assert_eq!(trained.layers[1], net.layers[1]);
        assert_ne!(trained.layers[2], net.layers[2]);
    }

    #[test]
    fn same_seed_same_params() {
        let ds = line_data(150);
        let net = init_network(&[1, 8, 1], 4).unwrap();
        let cfg = TrainConfig::default().with_seed(21);
        let a = train(&net, &ds, &cfg, &FreezeMask::all(2)).unwrap();
        let b = train(&net, &ds, &cfg, &FreezeMask::all(2)).unwrap();
        assert_eq!(a, b);
        let c = train(&net, &ds, &cfg.with_seed(22), &FreezeMask::all(2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        let ds = line_data(10);
        let net = init_network(&[2, 4, 1], 0).unwrap();
        assert!(matches!(
            train(&net, &ds, &TrainConfig::default(), &FreezeMask::all(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(FreezeMask::new(vec![false, false]).is_err());
        assert!(FreezeMask::only(2, &[5]).is_err());
    }
}
