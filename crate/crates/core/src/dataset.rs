//! Tabular data model and preprocessing.
//!
//! A [`Dataset`] is a dense row-major feature matrix with a named schema and a
//! single target column. All preprocessing steps are pure functions of their
//! inputs and an explicit seed.

use std::collections::HashSet;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ordered feature names plus the name of the target column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    target_name: String,
}

impl FeatureSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, target_name: impl Into<String>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let target_name = target_name.into();
        if names.is_empty() {
            return Err(Error::Schema("feature list is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateColumn(n.clone()));
            }
        }
        if seen.contains(target_name.as_str()) {
            return Err(Error::Schema(format!(
                "target {target_name:?} is also listed as a feature"
            )));
        }
        Ok(Self { names, target_name })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// True when every feature of `self` appears in `other` with the same target.
    pub fn is_subschema_of(&self, other: &FeatureSchema) -> bool {
        self.target_name == other.target_name && self.names.iter().all(|n| other.index_of(n).is_some())
    }
}

/// Feature matrix and target vector sharing one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let width = schema.len();
        let mut features = Vec::with_capacity(rows.len() * width);
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(schema, features, targets)
    }

    /// Builds a dataset from a row-major feature buffer.
    pub fn from_flat(schema: FeatureSchema, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let width = schema.len();
        if features.len() != targets.len() * width {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * width,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        Ok(Self {
            schema,
            features,
            targets,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features())
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let w = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * w);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            schema: self.schema.clone(),
            features,
            targets,
        }
    }

    /// Reorders/filters columns to match `schema`, looked up by name.
    pub fn project(&self, schema: &FeatureSchema) -> Result<Dataset> {
        let cols = schema
            .names()
            .iter()
            .map(|n| self.schema.index_of(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut features = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.rows() {
            features.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Dataset {
            schema: schema.clone(),
            features,
            targets: self.targets.clone(),
        })
    }

    /// Same features, replaced target vector.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Dataset> {
        Dataset::from_flat(self.schema.clone(), self.features.clone(), targets)
    }
}

/// Options for [`load_csv_with`].
#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// Column holding the regression target.
    pub target: String,
    /// Columns to skip entirely (e.g. other targets in a multi-target file).
    pub ignore: Vec<String>,
}

/// Result of a CSV import.
#[derive(Clone, Debug)]
pub struct CsvImport {
    pub dataset: Dataset,
    /// Rows skipped because a used cell was empty.
    pub dropped_rows: usize,
}

pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Dataset> {
    let opts = CsvOptions {
        target: target.to_string(),
        ignore: Vec::new(),
    };
    Ok(load_csv_with(path, &opts)?.dataset)
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<CsvImport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

/// Parses a header-first, comma-separated table. Rows with an empty cell in a
/// used column are dropped; any other non-numeric cell is an error naming its
/// 1-based data row.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<CsvImport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let target_col = header
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::MissingColumn(opts.target.clone()))?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_col && !opts.ignore.contains(&header[c]))
        .collect();
    let schema = FeatureSchema::new(feature_cols.iter().map(|&c| header[c].clone()), opts.target.clone())?;

    let parse = |cell: &str, row: usize, col: usize| -> Result<f64> {
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                row,
                column: header[col].clone(),
                value: cell.to_string(),
            }),
        }
    };

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut dropped_rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let used = feature_cols.iter().chain(std::iter::once(&target_col));
        if used.clone().any(|&c| rec.get(c).is_none_or(str::is_empty)) {
            dropped_rows += 1;
            continue;
        }
        for &c in &feature_cols {
            features.push(parse(&rec[c], row, c)?);
        }
        targets.push(parse(&rec[target_col], row, target_col)?);
    }
    if targets.is_empty() {
        return Err(Error::NoRows);
    }
    Ok(CsvImport {
        dataset: Dataset::from_flat(schema, features, targets)?,
        dropped_rows,
    })
}

/// Writes features then the target column. Values use shortest round-trip
/// decimal formatting, so `load_csv` reproduces them bit-exactly.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(ds, file)
}

pub fn write_csv_to<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.schema.names().iter().map(String::as_str).collect();
    header.push(ds.schema.target_name());
    w.write_record(&header)?;
    let mut buf = Vec::with_capacity(header.len());
    for (row, y) in ds.rows().zip(ds.targets()) {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        buf.push(y.to_string());
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-column z-score statistics for features and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
    pub target_mean: f64,
    pub target_stdev: f64,
}

fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    // constant columns pass through centered
    let degenerate = !(sd > 1e-12 * mean.abs().max(1.0));
    (mean, if degenerate { 1.0 } else { sd })
}

impl ScalerParams {
    /// Population statistics of every column of `ds`.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::NoRows);
        }
        let (means, stdevs) = (0..ds.n_features()).map(|j| mean_stdev(&ds.column(j))).unzip();
        let (target_mean, target_stdev) = mean_stdev(ds.targets());
        Ok(Self {
            means,
            stdevs,
            target_mean,
            target_stdev,
        })
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    fn check_width(&self, ds: &Dataset) -> Result<()> {
        if ds.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: ds.n_features(),
            });
        }
        Ok(())
    }

    pub fn transform_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_features(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_stdev
    }

    pub fn inverse_target(&self, y: f64) -> f64 {
        y * self.target_stdev + self.target_mean
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_width(ds)?;
        let features = ds.rows().flat_map(|r| self.transform_features(r)).collect();
        let targets = ds.targets().iter().map(|&y| self.transform_target(y)).collect();
        Dataset::from_flat(ds.schema().clone(), features, targets)
    }

    pub fn inverse(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_width(ds)?;
        let features = ds.rows().flat_map(|r| self.inverse_features(r)).collect();
        let targets = ds.targets().iter().map(|&y| self.inverse_target(y)).collect();
        Dataset::from_flat(ds.schema().clone(), features, targets)
    }
}

/// Fits z-score statistics on `ds` and returns the transformed copy.
pub fn fit_standardize(ds: &Dataset) -> Result<(Dataset, ScalerParams)> {
    let scaler = ScalerParams::fit(ds)?;
    Ok((scaler.transform(ds)?, scaler))
}

fn check_fraction(name: &'static str, value: f64, allow_one: bool) -> Result<()> {
    let ok = value > 0.0 && (value < 1.0 || (allow_one && value == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value })
    }
}

/// Seeded shuffled split into (train, rest). Both parts keep at least one row.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    check_fraction("train_fraction", train_fraction, false)?;
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} row(s) into two non-empty parts"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let perm = rng::permutation(n, seed, rng::STREAM_SPLIT);
    Ok((ds.select_rows(&perm[..n_train]), ds.select_rows(&perm[n_train..])))
}

/// Uniform sample without replacement of `round(fraction * N)` rows.
///
/// The sample is the prefix of one seeded permutation, so for a fixed seed the
/// samples for increasing fractions are nested. Selected rows keep their
/// original relative order.
pub fn subsample_fraction(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    check_fraction("fraction", fraction, true)?;
    let n = ds.n_rows();
    let take = ((fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let mut chosen = rng::permutation(n, seed, rng::STREAM_SUBSAMPLE);
    chosen.truncate(take);
    chosen.sort_unstable();
    Ok(ds.select_rows(&chosen))
}

/// Sensor-anomaly injection parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalySpec {
    /// Share of rows that receive noise.
    pub row_fraction: f64,
    /// Noise stdev relative to the column's mean absolute value.
    pub sigma_ratio: f64,
    pub seed: u64,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self {
            row_fraction: 0.20,
            sigma_ratio: 0.05,
            seed: 0,
        }
    }
}

/// Adds zero-mean Gaussian noise to every feature of a random subset of rows.
///
/// Column `j` gets noise with stdev `sigma_ratio * mean(|x_j|)`; the subset has
/// exactly `round(row_fraction * N)` rows. Targets and unselected rows are
/// left untouched. Expects raw (unstandardized) features.
pub fn inject_anomalies(ds: &Dataset, spec: &AnomalySpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.row_fraction) {
        return Err(Error::OutOfRange {
            name: "row_fraction",
            value: spec.row_fraction,
        });
    }
    if !(spec.sigma_ratio >= 0.0 && spec.sigma_ratio.is_finite()) {
        return Err(Error::OutOfRange {
            name: "sigma_ratio",
            value: spec.sigma_ratio,
        });
    }
    let n = ds.n_rows();
    let w = ds.n_features();
    let n_noisy = (spec.row_fraction * n as f64).round() as usize;
    if n_noisy == 0 || spec.sigma_ratio == 0.0 {
        return Ok(ds.clone());
    }
    let sigmas: Vec<f64> = (0..w)
        .map(|j| spec.sigma_ratio * ds.rows().map(|r| r[j].abs()).sum::<f64>() / n as f64)
        .collect();
    let mut rows = rng::permutation(n, spec.seed, rng::STREAM_ANOMALY);
    rows.truncate(n_noisy);
    rows.sort_unstable();

    let mut rng = rng::seeded(spec.seed, rng::STREAM_ANOMALY + 0x100);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = ds.features().to_vec();
    for i in rows {
        for (j, sigma) in sigmas.iter().enumerate() {
            features[i * w + j] += sigma * std_normal.sample(&mut rng);
        }
    }
    Dataset::from_flat(ds.schema().clone(), features, ds.targets().to_vec())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Keeps the `k` features with the largest absolute Pearson correlation with
/// the target. Ties go to the earlier column; the result keeps schema order.
pub fn select_features(ds: &Dataset, k: usize) -> Result<FeatureSchema> {
    let d = ds.n_features();
    if k == 0 || k > d {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
        });
    }
    let mut scored: Vec<(usize, f64)> = (0..d)
        .map(|j| (j, pearson(&ds.column(j), ds.targets()).abs()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = scored[..k].iter().map(|&(j, _)| j).collect();
    keep.sort_unstable();
    FeatureSchema::new(
        keep.iter().map(|&j| ds.schema().names()[j].clone()),
        ds.schema().target_name(),
    )
}
