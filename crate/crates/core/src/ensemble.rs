//! Stacked ensemble of transferred networks with an SVR meta-regressor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, FeatureSchema, ScalerParams};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rng;
use crate::svr::{predict_svr, SvrConfig, SvrModel};
use crate::transfer::{adapt_input, make_base_specs_with, target_scaler, BaseModelSet, BaseModelSpec, PretrainedModel};

/// Where the meta-regressor's training inputs come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum StackingMode {
    /// Base outputs on the same rows the bases were tuned on.
    #[default]
    InSample,
    /// Base outputs from refits that did not see the row.
    OutOfFold { folds: usize },
}

/// Everything `train_edtl` needs besides data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdtlConfig {
    pub train: TrainConfig,
    pub svr: SvrConfig,
    pub stacking: StackingMode,
    pub output_trainable: bool,
    pub reuse_source_scaler: bool,
}

impl Default for EdtlConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            svr: SvrConfig::default(),
            stacking: StackingMode::InSample,
            output_trainable: true,
            reuse_source_scaler: false,
        }
    }
}

impl EdtlConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdtlModel {
    pub bases: BaseModelSet,
    pub meta: SvrModel,
    /// Target-domain scaler; base outputs live in its standardized target units.
    pub scaler: ScalerParams,
    pub stacking_mode: StackingMode,
    pub config: EdtlConfig,
}

/// Base-model predictions for one standardized row, in spec order.
pub fn base_outputs(bases: &BaseModelSet, x: &[f64]) -> Result<Vec<f64>> {
    bases.models.iter().map(|m| m.forward(x)).collect()
}

/// Row-major `n x k` base outputs for `n` standardized rows.
pub fn base_output_matrix(bases: &BaseModelSet, x: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    let cols = bases
        .models
        .iter()
        .map(|m| m.forward_batch(x, n))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

fn fold_outputs(
    adapted: &crate::nn::NetworkParams,
    specs: &[BaseModelSpec],
    train_std: &Dataset,
    cfg: &EdtlConfig,
    folds: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = train_std.n_rows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds for {n} rows")));
    }
    let perm = rng::permutation(n, cfg.train.seed, rng::STREAM_FOLDS);
    let mut z = vec![Vec::new(); n];
    for f in 0..folds {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|&p| p % folds == f);
        let held: Vec<usize> = held.into_iter().map(|p| perm[p]).collect();
        let kept: Vec<usize> = kept.into_iter().map(|p| perm[p]).collect();
        let part = train_std.select_rows(&kept);
        let fold_seed = cfg.train.seed.wrapping_add(1000 * (f as u64 + 1));
        let set = BaseModelSet::fine_tune_all(adapted, specs, train_std.schema(), &part, &cfg.train, fold_seed)?;
        let held_ds = train_std.select_rows(&held);
        let rows = base_output_matrix(&set, held_ds.features(), held_ds.n_rows())?;
        for (i, r) in held.into_iter().zip(rows) {
            z[i] = r;
        }
    }
    Ok(z)
}

/// Adapts `pre` to the target schema, fine-tunes one base model per freeze
/// strategy and fits the SVR on their outputs.
///
/// `target_train` is in raw units; the run seed is `cfg.train.seed`.
pub fn train_edtl(pre: &PretrainedModel, target_train: &Dataset, cfg: &EdtlConfig) -> Result<EdtlModel> {
    if target_train.is_empty() {
        return Err(Error::NoRows);
    }
    let seed = cfg.train.seed;
    let scaler = target_scaler(pre, target_train, cfg.reuse_source_scaler)?;
    let train_std = scaler.transform(target_train)?;
    let adapted = adapt_input(pre, target_train.schema(), seed)?;
    let specs = make_base_specs_with(adapted.n_layers() - 1, cfg.output_trainable)?;
    let bases = BaseModelSet::fine_tune_all(&adapted, &specs, target_train.schema(), &train_std, &cfg.train, seed)?;
    let z = match cfg.stacking {
        StackingMode::InSample => base_output_matrix(&bases, train_std.features(), train_std.n_rows())?,
        StackingMode::OutOfFold { folds } => fold_outputs(&adapted, &specs, &train_std, cfg, folds)?,
    };
    let meta = if z.len() < 2 {
        let hyper = cfg.svr.resolve(&[vec![0.0; bases.len()], vec![1.0; bases.len()]])?;
        SvrModel::constant(train_std.targets()[0], hyper)
    } else {
        cfg.svr.fit(&z, train_std.targets())?
    };
    Ok(EdtlModel {
        bases,
        meta,
        scaler,
        stacking_mode: cfg.stacking,
        config: cfg.clone(),
    })
}

impl EdtlModel {
    pub fn schema(&self) -> &FeatureSchema {
        &self.bases.target_schema
    }

    /// Prediction in raw target units for one raw row.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let d = self.bases.input_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let z = base_outputs(&self.bases, &self.scaler.transform_features(x))?;
        Ok(self.scaler.inverse_target(predict_svr(&self.meta, &z)?))
    }

    /// Predictions for every row of a raw dataset with the target schema's
    /// feature columns.
    pub fn predict_batch(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.schema().names() != self.schema().names() {
            return Err(Error::Schema("input columns differ from the model's schema".into()));
        }
        let x: Vec<f64> = ds.rows().flat_map(|r| self.scaler.transform_features(r)).collect();
        base_output_matrix(&self.bases, &x, ds.n_rows())?
            .iter()
            .map(|z| Ok(self.scaler.inverse_target(predict_svr(&self.meta, z)?)))
            .collect()
    }

    /// Writes the base networks under `bases/` and everything else to
    /// `edtl.json`, tagged with the config hash.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.bases.save(dir.join("bases"))?;
        let record = EdtlRecord {
            meta: self.meta.clone(),
            scaler: self.scaler.clone(),
            stacking_mode: self.stacking_mode,
            config_hash: self.config.hash()?,
            config: self.config.clone(),
        };
        let path = dir.join("edtl.json");
        std::fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("edtl.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: EdtlRecord = serde_json::from_str(&text)?;
        if r.config.hash()? != r.config_hash {
            return Err(Error::Config(format!("{}: config hash mismatch", path.display())));
        }
        let bases = BaseModelSet::load(dir.join("bases"))?;
        if r.meta.input_dim().is_some_and(|k| k != bases.len()) {
            return Err(Error::DimensionMismatch {
                expected: bases.len(),
                got: r.meta.input_dim().unwrap_or(0),
            });
        }
        if r.scaler.n_features() != bases.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: bases.input_dim(),
                got: r.scaler.n_features(),
            });
        }
        Ok(Self {
            bases,
            meta: r.meta,
            scaler: r.scaler,
            stacking_mode: r.stacking_mode,
            config: r.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EdtlRecord {
    meta: SvrModel,
    scaler: ScalerParams,
    stacking_mode: StackingMode,
    config: EdtlConfig,
    config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{pretrain, Architecture};
    use rand::Rng;

    fn toy(n: usize, names: &[&str], seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let mut r = rng::seeded(seed, 31);
        let d = names.len();
        let x: Vec<f64> = (0..n * d).map(|_| r.gen_range(1.0..3.0)).collect();
        let y = x.chunks_exact(d).map(&f).collect();
        Dataset::from_flat(FeatureSchema::new(names.to_vec(), "y").unwrap(), x, y).unwrap()
    }

    fn quick() -> EdtlConfig {
        EdtlConfig {
            train: TrainConfig {
                epochs: 8,
                seed: 5,
                ..TrainConfig::default()
            },
            ..EdtlConfig::default()
        }
    }

    fn pretrained() -> PretrainedModel {
        let src = toy(400, &["a", "b", "c"], 1, |x| x[0] * x[1] + x[2]);
        let arch = Architecture {
            hidden_layers: 4,
            hidden_width: 16,
        };
        pretrain(&src, &quick().train, &arch).unwrap()
    }

    #[test]
    fn pipeline_composition() {
        let pre = pretrained();
        let tgt = toy(150, &["a", "d"], 2, |x| x[0] * x[1] + 1.0);
        let m = train_edtl(&pre, &tgt, &quick()).unwrap();
        assert_eq!(m.bases.len(), 5);
        assert_eq!(m.meta.input_dim().unwrap_or(5), 5);
        let x = tgt.row(3);
        let z = base_outputs(&m.bases, &m.scaler.transform_features(x)).unwrap();
        assert_eq!(z.len(), 5);
        for (j, net) in m.bases.models.iter().enumerate() {
            assert_eq!(z[j], net.forward(&m.scaler.transform_features(x)).unwrap());
        }
        let direct = m.scaler.inverse_target(predict_svr(&m.meta, &z).unwrap());
        assert_eq!(m.predict(x).unwrap(), direct);
        let batch = m.predict_batch(&tgt).unwrap();
        for (i, row) in tgt.rows().enumerate() {
            assert_eq!(batch[i].to_bits(), m.predict(row).unwrap().to_bits());
        }
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn deterministic_and_round_trips() {
        let pre = pretrained();
        let tgt = toy(100, &["b", "e", "f"], 3, |x| x[0] + x[1] * x[2]);
        let a = train_edtl(&pre, &tgt, &quick()).unwrap();
        let b = train_edtl(&pre, &tgt, &quick()).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let back = EdtlModel::load(dir.path()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn constant_target_gives_constant_predictions() {
        let pre = pretrained();
        let tgt = toy(80, &["a", "b"], 4, |_| 42.0);
        let m = train_edtl(&pre, &tgt, &quick()).unwrap();
        for row in tgt.rows() {
            let p = m.predict(row).unwrap();
            let eps = m.meta.hyper.epsilon * m.scaler.target_stdev;
            assert!((p - 42.0).abs() <= eps + 1e-9, "{p}");
        }
    }

    #[test]
    fn out_of_fold_stacking_runs() {
        let pre = pretrained();
        let tgt = toy(60, &["a", "b"], 6, |x| x[0] - x[1]);
        let cfg = EdtlConfig {
            stacking: StackingMode::OutOfFold { folds: 3 },
            ..quick()
        };
        let m = train_edtl(&pre, &tgt, &cfg).unwrap();
        assert_eq!(m.stacking_mode, StackingMode::OutOfFold { folds: 3 });
        assert!(m.predict(tgt.row(0)).unwrap().is_finite());
        let bad = EdtlConfig {
            stacking: StackingMode::OutOfFold { folds: 1 },
            ..quick()
        };
        assert!(train_edtl(&pre, &tgt, &bad).is_err());
    }

    #[test]
    fn permuting_bases_consistently_keeps_predictions() {
        let pre = pretrained();
        let tgt = toy(90, &["a", "c"], 7, |x| x[0] * x[1]);
        let cfg = EdtlConfig {
            svr: SvrConfig {
                tol: 1e-10,
                max_passes: Some(10_000),
                ..SvrConfig::default()
            },
            ..quick()
        };
        let m = train_edtl(&pre, &tgt, &cfg).unwrap();
        let std = m.scaler.transform(&tgt).unwrap();
        let order = [3usize, 0, 4, 1, 2];
        let mut perm = m.bases.clone();
        perm.models = order.iter().map(|&i| m.bases.models[i].clone()).collect();
        perm.specs = order.iter().map(|&i| m.bases.specs[i].clone()).collect();
        perm.seeds = order.iter().map(|&i| m.bases.seeds[i]).collect();
        let z = base_output_matrix(&perm, std.features(), std.n_rows()).unwrap();
        let meta = m.config.svr.fit(&z, std.targets()).unwrap();
        let permuted = EdtlModel {
            bases: perm,
            meta,
            ..m.clone()
        };
        for row in tgt.rows() {
            let a = m.predict(row).unwrap();
            let b = permuted.predict(row).unwrap();
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn in_sample_meta_interpolates_small_sets() {
        let pre = pretrained();
        let tgt = toy(12, &["a", "b"], 8, |x| x[0] + x[1] * x[1]);
        let cfg = EdtlConfig {
            svr: SvrConfig {
                c: 1e6,
                epsilon: 0.0,
                tol: 1e-6,
                max_passes: Some(100_000),
                ..SvrConfig::default()
            },
            ..quick()
        };
        let m = train_edtl(&pre, &tgt, &cfg).unwrap();
        assert!(m.meta.converged);
        let std = m.scaler.transform(&tgt).unwrap();
        let z = base_output_matrix(&m.bases, std.features(), std.n_rows()).unwrap();
        for (zi, y) in z.iter().zip(std.targets()) {
            let r = (predict_svr(&m.meta, zi).unwrap() - y).abs();
            assert!(r <= 1e-3, "{r}");
        }
    }

    #[test]
    fn hash_tracks_config() {
        let a = EdtlConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.svr.c = 2.0;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
