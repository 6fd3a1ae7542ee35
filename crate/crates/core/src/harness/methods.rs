use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{knn_predict, mape};
use crate::dataset::{Dataset, FeatureSchema, ScalerParams};
use crate::ensemble::{train_edtl, EdtlConfig, EdtlModel};
use crate::error::{Error, Result};
use crate::nn::{init_network, train, FreezeMask, NetworkParams};
use crate::transfer::{adapt_input, fine_tune, target_scaler, Architecture, BaseModelSpec, PretrainedModel, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Transfer,
    Edtl,
    Knn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Direct, Method::Transfer, Method::Edtl, Method::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Transfer => "transfer",
            Method::Edtl => "edtl",
            Method::Knn => "knn",
        }
    }

    pub fn needs_pretrained(self) -> bool {
        matches!(self, Method::Transfer | Method::Edtl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Settings shared by all methods; the run seed is `edtl.train.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub architecture: Architecture,
    pub edtl: EdtlConfig,
    pub knn_k: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            edtl: EdtlConfig::default(),
            knn_k: 5,
        }
    }
}

impl MethodConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.edtl.train.seed = seed;
        c
    }

    pub fn seed(&self) -> u64 {
        self.edtl.train.seed
    }
}

/// A single network with its input/target scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub net: NetworkParams,
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
}

/// Nearest-neighbor regressor over standardized training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub schema: FeatureSchema,
    pub scaler: ScalerParams,
    /// Standardized features, row-major.
    pub features: Vec<f64>,
    /// Raw targets.
    pub targets: Vec<f64>,
    pub k: usize,
}

/// Any fitted model the harness and CLI can evaluate or store.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Predictor {
    Network(NetworkModel),
    Edtl(EdtlModel),
    Knn(KnnModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StoredModel {
    Network(NetworkModel),
    Knn(KnnModel),
    Edtl,
}

const MODEL_FILE: &str = "model.json";

impl Predictor {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            Predictor::Network(m) => &m.schema,
            Predictor::Edtl(m) => m.schema(),
            Predictor::Knn(m) => &m.schema,
        }
    }

    /// Raw-unit predictions for every row; `ds` must carry the model's feature
    /// columns in order.
    pub fn predict_batch(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.schema().names() != self.schema().names() {
            return Err(Error::Schema(format!(
                "expected columns {:?}, got {:?}",
                self.schema().names(),
                ds.schema().names()
            )));
        }
        match self {
            Predictor::Network(m) => {
                let x: Vec<f64> = ds.rows().flat_map(|r| m.scaler.transform_features(r)).collect();
                Ok(m.net
                    .forward_batch(&x, ds.n_rows())?
                    .into_iter()
                    .map(|y| m.scaler.inverse_target(y))
                    .collect())
            }
            Predictor::Edtl(m) => m.predict_batch(ds),
            Predictor::Knn(m) => {
                let train = Dataset::from_flat(m.schema.clone(), m.features.clone(), m.targets.clone())?;
                ds.rows()
                    .map(|r| knn_predict(&train, &m.scaler.transform_features(r), m.k))
                    .collect()
            }
        }
    }

    /// Writes `model.json` into `dir`; EDTL models add their own files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stored = match self {
            Predictor::Network(m) => StoredModel::Network(m.clone()),
            Predictor::Knn(m) => StoredModel::Knn(m.clone()),
            Predictor::Edtl(m) => {
                m.save(dir)?;
                StoredModel::Edtl
            }
        };
        let path = dir.join(MODEL_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&stored)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(match serde_json::from_str(&text)? {
            StoredModel::Network(m) => {
                m.net.validate()?;
                Predictor::Network(m)
            }
            StoredModel::Knn(m) => Predictor::Knn(m),
            StoredModel::Edtl => Predictor::Edtl(EdtlModel::load(dir)?),
        })
    }
}

/// A fresh network trained on target data only.
pub fn fit_direct(train_raw: &Dataset, cfg: &MethodConfig) -> Result<NetworkModel> {
    let scaler = ScalerParams::fit(train_raw)?;
    let std = scaler.transform(train_raw)?;
    let init = init_network(&cfg.architecture.dims(train_raw.n_features()), cfg.seed())?;
    let net = train(&init, &std, &cfg.edtl.train, &FreezeMask::all(init.n_layers()))?;
    Ok(NetworkModel {
        net,
        schema: train_raw.schema().clone(),
        scaler,
    })
}

/// The pretrained network with a new input layer, all layers fine-tuned.
pub fn fit_transfer(pre: &PretrainedModel, train_raw: &Dataset, cfg: &MethodConfig) -> Result<NetworkModel> {
    let scaler = target_scaler(pre, train_raw, cfg.edtl.reuse_source_scaler)?;
    let std = scaler.transform(train_raw)?;
    let adapted = adapt_input(pre, train_raw.schema(), cfg.seed())?;
    let spec = BaseModelSpec::new(Strategy::TuneAll, true);
    let net = fine_tune(&adapted, &spec, &std, &cfg.edtl.train)?;
    Ok(NetworkModel {
        net,
        schema: train_raw.schema().clone(),
        scaler,
    })
}

pub fn fit_knn(train_raw: &Dataset, cfg: &MethodConfig) -> Result<KnnModel> {
    let scaler = ScalerParams::fit(train_raw)?;
    let std = scaler.transform(train_raw)?;
    Ok(KnnModel {
        schema: train_raw.schema().clone(),
        scaler,
        features: std.features().to_vec(),
        targets: train_raw.targets().to_vec(),
        k: cfg.knn_k.min(train_raw.n_rows()),
    })
}

/// Fits `method`; transfer-based methods need `pre`.
pub fn fit_method(
    method: Method,
    pre: Option<&PretrainedModel>,
    train_raw: &Dataset,
    cfg: &MethodConfig,
) -> Result<Predictor> {
    let need = || pre.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a pretrained model")));
    Ok(match method {
        Method::Direct => Predictor::Network(fit_direct(train_raw, cfg)?),
        Method::Transfer => Predictor::Network(fit_transfer(need()?, train_raw, cfg)?),
        Method::Edtl => Predictor::Edtl(train_edtl(need()?, train_raw, &cfg.edtl)?),
        Method::Knn => Predictor::Knn(fit_knn(train_raw, cfg)?),
    })
}

/// Test-set MAPE of `method` trained on `train_raw`.
pub fn run_method(
    method: Method,
    pre: Option<&PretrainedModel>,
    train_raw: &Dataset,
    test_raw: &Dataset,
    cfg: &MethodConfig,
) -> Result<f64> {
    let model = fit_method(method, pre, train_raw, cfg)?;
    mape(test_raw.targets(), &model.predict_batch(test_raw)?)
}

pub fn run_direct(train_raw: &Dataset, test_raw: &Dataset, cfg: &MethodConfig) -> Result<f64> {
    run_method(Method::Direct, None, train_raw, test_raw, cfg)
}

pub fn run_transfer(pre: &PretrainedModel, train_raw: &Dataset, test_raw: &Dataset, cfg: &MethodConfig) -> Result<f64> {
    run_method(Method::Transfer, Some(pre), train_raw, test_raw, cfg)
}

pub fn run_edtl(pre: &PretrainedModel, train_raw: &Dataset, test_raw: &Dataset, cfg: &MethodConfig) -> Result<f64> {
    run_method(Method::Edtl, Some(pre), train_raw, test_raw, cfg)
}

pub fn run_knn(train_raw: &Dataset, test_raw: &Dataset, cfg: &MethodConfig) -> Result<f64> {
    run_method(Method::Knn, None, train_raw, test_raw, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split;
    use crate::nn::TrainConfig;
    use crate::transfer::pretrain;
    use rand::Rng;

    fn line(n: usize, seed: u64) -> Dataset {
        let mut r = crate::rng::seeded(seed, 12);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(1.0..5.0)).collect();
        let y = x.iter().map(|v| 2.0 * v).collect();
        Dataset::from_flat(FeatureSchema::new(["x"], "y").unwrap(), x, y).unwrap()
    }

    fn cfg(epochs: usize) -> MethodConfig {
        let mut c = MethodConfig {
            architecture: Architecture {
                hidden_layers: 2,
                hidden_width: 16,
            },
            ..MethodConfig::default()
        };
        c.edtl.train = TrainConfig {
            epochs,
            seed: 1,
            ..TrainConfig::default()
        };
        c
    }

    #[test]
    fn direct_fits_a_line() {
        let (tr, te) = split(&line(1000, 1), 0.8, 1).unwrap();
        let m = run_direct(&tr, &te, &cfg(60)).unwrap();
        assert!(m < 2.0, "{m}");
        assert_eq!(m, run_direct(&tr, &te, &cfg(60)).unwrap());
    }

    #[test]
    fn predictors_round_trip() {
        let ds = line(200, 2);
        let c = cfg(3);
        let pre = pretrain(&line(300, 3), &c.edtl.train, &c.architecture).unwrap();
        for method in Method::ALL {
            let p = fit_method(method, Some(&pre), &ds, &c).unwrap();
            let dir = tempfile::tempdir().unwrap();
            p.save(dir.path()).unwrap();
            let back = Predictor::load(dir.path()).unwrap();
            assert_eq!(back, p, "{method}");
            assert_eq!(back.predict_batch(&ds).unwrap(), p.predict_batch(&ds).unwrap());
        }
        assert!(fit_method(Method::Edtl, None, &ds, &c).is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("forest".parse::<Method>().is_err());
    }
}
