//! Source pretraining, input adaptation and freeze-strategy fine-tuning.
//!
//! Weight layer 0 maps inputs to the first hidden layer; on a transferred
//! network it is the adaptation layer. Hidden layer `j` (1-based) is the
//! weight layer producing its activations, index `j - 1`, so hidden layer 1
//! coincides with the adaptation layer.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split, Dataset, FeatureSchema, ScalerParams};
use crate::error::{Error, Result};
use crate::nn::{
    init_network, mse_loss, train, Activation, FreezeMask, LayerParams, NetworkParams, SavedNetwork, TrainConfig,
};
use crate::rng;

/// Hidden-layer shape shared by every network in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_width: 64,
        }
    }
}

impl Architecture {
    /// Node counts from `n_inputs` to the scalar output.
    pub fn dims(&self, n_inputs: usize) -> Vec<usize> {
        let mut d = vec![n_inputs];
        d.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        d.push(1);
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: f64,
    pub validation_mse: f64,
}

/// A network trained on the source line, with the schema and scaler it saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainedModel {
    pub net: NetworkParams,
    pub source_schema: FeatureSchema,
    pub scaler: ScalerParams,
    pub train_report: TrainReport,
}

pub const VALIDATION_FRACTION: f64 = 0.1;

fn standardized_mse(net: &NetworkParams, ds: &Dataset) -> Result<f64> {
    mse_loss(ds.targets(), &net.forward_batch(ds.features(), ds.n_rows())?)
}

/// Trains every layer on raw source data.
///
/// Holds out 10% for validation, fits the scaler on the remaining rows and
/// initializes from `cfg.seed`.
pub fn pretrain(source: &Dataset, cfg: &TrainConfig, arch: &Architecture) -> Result<PretrainedModel> {
    if source.is_empty() {
        return Err(Error::NoRows);
    }
    if arch.hidden_layers == 0 || arch.hidden_width == 0 {
        return Err(Error::InvalidArgument(format!("degenerate architecture {arch:?}")));
    }
    let (train_raw, val_raw) = split(source, 1.0 - VALIDATION_FRACTION, cfg.seed)?;
    let scaler = ScalerParams::fit(&train_raw)?;
    let train_std = scaler.transform(&train_raw)?;
    let val_std = scaler.transform(&val_raw)?;
    let init = init_network(&arch.dims(source.n_features()), cfg.seed)?;
    let net = train(&init, &train_std, cfg, &FreezeMask::all(init.n_layers()))?;
    let train_report = TrainReport {
        train_mse: standardized_mse(&net, &train_std)?,
        validation_mse: standardized_mse(&net, &val_std)?,
    };
    Ok(PretrainedModel {
        net,
        source_schema: source.schema().clone(),
        scaler,
        train_report,
    })
}

impl PretrainedModel {
    /// Prediction in raw target units for a raw source-schema row.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let z = self.scaler.transform_features(x);
        Ok(self.scaler.inverse_target(self.net.forward(&z)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.net.validate()?;
        if m.net.input_dim() != m.source_schema.len() || m.scaler.n_features() != m.source_schema.len() {
            return Err(Error::Schema(format!(
                "{}: network, scaler and schema widths disagree",
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Replaces the first weight layer with a fresh He-uniform ReLU layer sized
/// for `target_schema`. Deeper layers are copied unchanged.
pub fn adapt_input(pre: &PretrainedModel, target_schema: &FeatureSchema, seed: u64) -> Result<NetworkParams> {
    if target_schema.is_empty() {
        return Err(Error::Empty("target schema"));
    }
    let mut layers = pre.net.layers.clone();
    let width = layers[0].out_dim;
    let mut r = rng::seeded(seed, rng::STREAM_INIT);
    layers[0] = LayerParams::he_uniform(target_schema.len(), width, Activation::Relu, &mut r);
    if pre.net.n_layers() == 1 {
        // no hidden layers: the replaced layer is also the output
        layers[0].activation = Activation::Linear;
    }
    NetworkParams::new(layers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Adaptation layer plus one hidden layer (1-based).
    TuneHidden(usize),
    TuneAll,
}

/// One fine-tuning recipe for a base model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseModelSpec {
    pub strategy: Strategy,
    pub description: String,
    /// Whether the output layer trains under `TuneHidden`.
    pub output_trainable: bool,
}

impl BaseModelSpec {
    pub fn new(strategy: Strategy, output_trainable: bool) -> Self {
        let description = match strategy {
            Strategy::TuneHidden(j) => format!("adaptation layer and hidden layer {j} trainable"),
            Strategy::TuneAll => "all layers trainable".to_string(),
        };
        Self {
            strategy,
            description,
            output_trainable,
        }
    }

    /// Trainable layers of a network with `n_layers` weight layers.
    pub fn mask(&self, n_layers: usize) -> Result<FreezeMask> {
        match self.strategy {
            Strategy::TuneAll => Ok(FreezeMask::all(n_layers)),
            Strategy::TuneHidden(j) => {
                if j == 0 || j >= n_layers {
                    return Err(Error::InvalidArgument(format!(
                        "hidden layer {j} does not exist in a {n_layers}-layer network"
                    )));
                }
                let mut layers = vec![0, j - 1];
                if self.output_trainable {
                    layers.push(n_layers - 1);
                }
                FreezeMask::only(n_layers, &layers)
            }
        }
    }
}

/// `TuneHidden(1..=J)` followed by `TuneAll`, output layer trainable.
pub fn make_base_specs(hidden_layers: usize) -> Result<Vec<BaseModelSpec>> {
    make_base_specs_with(hidden_layers, true)
}

pub fn make_base_specs_with(hidden_layers: usize, output_trainable: bool) -> Result<Vec<BaseModelSpec>> {
    if hidden_layers == 0 {
        return Err(Error::InvalidArgument("need at least one hidden layer".into()));
    }
    let mut specs: Vec<_> = (1..=hidden_layers)
        .map(|j| BaseModelSpec::new(Strategy::TuneHidden(j), output_trainable))
        .collect();
    specs.push(BaseModelSpec::new(Strategy::TuneAll, output_trainable));
    Ok(specs)
}

/// Trains a copy of `adapted` on standardized target data under `spec`'s
/// mask. Frozen layers come back bit-identical.
pub fn fine_tune(
    adapted: &NetworkParams,
    spec: &BaseModelSpec,
    target_train: &Dataset,
    cfg: &TrainConfig,
) -> Result<NetworkParams> {
    train(adapted, target_train, cfg, &spec.mask(adapted.n_layers())?)
}

/// Target-domain scaler.
///
/// With `reuse_source` the target statistics and the statistics of features
/// shared by name with the source come from the source scaler; target-only
/// features keep their fitted statistics.
pub fn target_scaler(pre: &PretrainedModel, target_train: &Dataset, reuse_source: bool) -> Result<ScalerParams> {
    let mut s = ScalerParams::fit(target_train)?;
    if reuse_source {
        for (j, name) in target_train.schema().names().iter().enumerate() {
            if let Some(i) = pre.source_schema.index_of(name) {
                s.means[j] = pre.scaler.means[i];
                s.stdevs[j] = pre.scaler.stdevs[i];
            }
        }
        s.target_mean = pre.scaler.target_mean;
        s.target_stdev = pre.scaler.target_stdev;
    }
    Ok(s)
}

/// The fine-tuned networks of one EDTL run.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModelSet {
    pub models: Vec<NetworkParams>,
    pub specs: Vec<BaseModelSpec>,
    pub target_schema: FeatureSchema,
    pub seeds: Vec<u64>,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct SetManifest {
    specs: Vec<BaseModelSpec>,
    seeds: Vec<u64>,
    target_schema: FeatureSchema,
    config: TrainConfig,
    files: Vec<String>,
}

impl BaseModelSet {
    /// Fine-tunes every spec from the same adapted network, in parallel.
    /// Spec `i` trains with seed `run_seed + i`.
    pub fn fine_tune_all(
        adapted: &NetworkParams,
        specs: &[BaseModelSpec],
        target_schema: &FeatureSchema,
        target_train: &Dataset,
        cfg: &TrainConfig,
        run_seed: u64,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("base model specs"));
        }
        let seeds: Vec<u64> = (0..specs.len() as u64).map(|i| run_seed.wrapping_add(i)).collect();
        let models = specs
            .par_iter()
            .zip(&seeds)
            .map(|(spec, &seed)| fine_tune(adapted, spec, target_train, &cfg.with_seed(seed)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            specs: specs.to_vec(),
            target_schema: target_schema.clone(),
            seeds,
            config: cfg.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.target_schema.len()
    }

    /// Writes `base_<i>.json` per model and a `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.len());
        for (i, (net, &seed)) in self.models.iter().zip(&self.seeds).enumerate() {
            let name = format!("base_{i}.json");
            SavedNetwork::new(net.clone(), self.config.with_seed(seed), seed).save(dir.join(&name))?;
            files.push(name);
        }
        let manifest = SetManifest {
            specs: self.specs.clone(),
            seeds: self.seeds.clone(),
            target_schema: self.target_schema.clone(),
            config: self.config.clone(),
            files,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: SetManifest = serde_json::from_str(&text)?;
        if m.files.len() != m.specs.len() || m.seeds.len() != m.specs.len() || m.files.is_empty() {
            return Err(Error::Schema(format!("{}: inconsistent manifest", path.display())));
        }
        let mut models = Vec::with_capacity(m.files.len());
        for f in &m.files {
            let saved = SavedNetwork::load(dir.join(f))?;
            if saved.network.input_dim() != m.target_schema.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.target_schema.len(),
                    got: saved.network.input_dim(),
                });
            }
            models.push(saved.network);
        }
        Ok(Self {
            models,
            specs: m.specs,
            target_schema: m.target_schema,
            seeds: m.seeds,
            config: m.config,
        })
    }
}
