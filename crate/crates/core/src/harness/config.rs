use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::methods::{Method, MethodConfig};
use crate::dataset::{load_csv_with, AnomalySpec, CsvOptions, Dataset};
use crate::ensemble::StackingMode;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::simulator::{
    make_domain_pair, FabricType, LineProfile, LineTable, Target, DEFAULT_N_SOURCE, DEFAULT_N_TARGET,
};
use crate::svr::SvrConfig;
use crate::transfer::Architecture;

/// Built-in line profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Source,
    Target,
    MisShifted,
    /// The target line with every shift knob reset.
    Aligned,
}

/// A preset name or a full profile definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LineChoice {
    Preset(Preset),
    Custom(Box<LineProfile>),
}

impl LineChoice {
    pub fn resolve(&self, fabric: FabricType) -> LineProfile {
        match self {
            LineChoice::Preset(Preset::Source) => LineProfile::source_line(fabric),
            LineChoice::Preset(Preset::Target) => LineProfile::target_line(fabric),
            LineChoice::Preset(Preset::MisShifted) => LineProfile::mis_shifted_source(fabric),
            LineChoice::Preset(Preset::Aligned) => LineProfile::target_line(fabric).without_shift(),
            LineChoice::Custom(p) => (**p).clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Simulated {
        #[serde(default = "default_source")]
        source: LineChoice,
        #[serde(default = "default_target")]
        target: LineChoice,
        #[serde(default = "default_n_source")]
        n_source: usize,
        #[serde(default = "default_n_target")]
        n_target: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_fabric")]
        fabric: FabricType,
    },
    /// Two tables holding sensor columns plus one column per modeled target.
    Csv { source: PathBuf, target: PathBuf },
}

fn default_source() -> LineChoice {
    LineChoice::Preset(Preset::Source)
}
fn default_target() -> LineChoice {
    LineChoice::Preset(Preset::Target)
}
fn default_n_source() -> usize {
    DEFAULT_N_SOURCE
}
fn default_n_target() -> usize {
    DEFAULT_N_TARGET
}
fn default_fabric() -> FabricType {
    FabricType::Nylon
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Simulated {
            source: default_source(),
            target: default_target(),
            n_source: DEFAULT_N_SOURCE,
            n_target: DEFAULT_N_TARGET,
            seed: 0,
            fabric: FabricType::Nylon,
        }
    }
}

/// Source and target data for every modeled quantity.
pub enum LoadedData {
    Tables(LineTable, LineTable),
    Files(PathBuf, PathBuf),
}

impl LoadedData {
    /// Raw (source, target) datasets for one quantity.
    pub fn pair(&self, target: Target) -> Result<(Dataset, Dataset)> {
        match self {
            LoadedData::Tables(s, t) => Ok((s.dataset(target)?, t.dataset(target)?)),
            LoadedData::Files(s, t) => Ok((load_target_csv(s, target)?, load_target_csv(t, target)?)),
        }
    }
}

/// Loads one target column, skipping the other target columns if present.
pub fn load_target_csv(path: &Path, target: Target) -> Result<Dataset> {
    let opts = CsvOptions {
        target: target.name().to_string(),
        ignore: Target::ALL
            .iter()
            .filter(|t| **t != target)
            .map(|t| t.name().to_string())
            .collect(),
    };
    Ok(load_csv_with(path, &opts)?.dataset)
}

impl DataSource {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSource::Simulated {
                source,
                target,
                n_source,
                n_target,
                seed,
                fabric,
            } => {
                let (s, t) = make_domain_pair(
                    &source.resolve(*fabric),
                    &target.resolve(*fabric),
                    *n_source,
                    *n_target,
                    *seed,
                )?;
                Ok(LoadedData::Tables(s, t))
            }
            DataSource::Csv { source, target } => Ok(LoadedData::Files(source.clone(), target.clone())),
        }
    }
}

/// A full sweep description, usually read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub targets: Vec<Target>,
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    /// When set, every leg also runs on anomaly-injected training data.
    pub anomaly: Option<AnomalySpec>,
    pub seeds: Vec<u64>,
    /// Share of target rows held out for testing.
    pub test_fraction: f64,
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub svr: SvrConfig,
    pub stacking: StackingMode,
    pub output_trainable: bool,
    pub reuse_source_scaler: bool,
    pub knn_k: usize,
    /// Record real wall times; otherwise `wall_ms` is 0 so reports are
    /// reproducible byte for byte.
    pub timing: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = MethodConfig::default();
        Self {
            data: DataSource::default(),
            targets: vec![Target::E],
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            methods: vec![Method::Direct, Method::Transfer, Method::Edtl, Method::Knn],
            anomaly: None,
            seeds: vec![1, 2, 3, 4, 5],
            test_fraction: 0.2,
            train: TrainConfig::default(),
            architecture: m.architecture,
            svr: m.edtl.svr,
            stacking: m.edtl.stacking,
            output_trainable: m.edtl.output_trainable,
            reuse_source_scaler: m.edtl.reuse_source_scaler,
            knn_k: m.knn_k,
            timing: false,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.targets.is_empty() || self.methods.is_empty() || self.fractions.is_empty() {
            return Err(Error::Config("targets, methods and fractions must be non-empty".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("fraction {f} outside (0, 1]")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.train.validate()
    }

    /// Per-method settings for one run seed.
    pub fn method_config(&self, seed: u64) -> MethodConfig {
        let mut m = MethodConfig {
            architecture: self.architecture,
            knn_k: self.knn_k,
            ..MethodConfig::default()
        };
        m.edtl.train = self.train.with_seed(seed);
        m.edtl.svr = self.svr.clone();
        m.edtl.stacking = self.stacking;
        m.edtl.output_trainable = self.output_trainable;
        m.edtl.reuse_source_scaler = self.reuse_source_scaler;
        m
    }
}
