use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::methods::Method;
use crate::error::{Error, Result};
use crate::simulator::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Anomalous,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Anomalous => "anomalous",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Condition::Clean),
            "anomalous" => Ok(Condition::Anomalous),
            _ => Err(Error::InvalidArgument(format!("unknown condition {s:?}"))),
        }
    }
}

/// Identifies one leg of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegKey {
    pub method: Method,
    pub target: Target,
    pub fraction: f64,
    pub condition: Condition,
    pub seed: u64,
}

impl LegKey {
    fn sort_key(&self) -> (Method, Target, u64, Condition, u64) {
        (
            self.method,
            self.target,
            self.fraction.to_bits(),
            self.condition,
            self.seed,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub key: LegKey,
    pub mape_percent: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub key: LegKey,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub target: Target,
    pub fraction: f64,
    pub condition: Condition,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stdev: f64,
}

/// Mean anomalous MAPE minus mean clean MAPE for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Degradation {
    pub method: Method,
    pub target: Target,
    pub fraction: f64,
    pub clean: f64,
    pub anomalous: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
}

pub const REPORT_HEADER: [&str; 7] = [
    "method",
    "target",
    "fraction",
    "condition",
    "seed",
    "mape_percent",
    "wall_ms",
];

impl ExperimentReport {
    /// Orders records and failures by (method, target, fraction, condition, seed).
    pub fn sort(&mut self) {
        self.records.sort_by_key(|r| r.key.sort_key());
        self.failures.sort_by_key(|f| f.key.sort_key());
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        let mut recs: Vec<&Record> = self.records.iter().collect();
        recs.sort_by_key(|r| r.key.sort_key());
        for group in recs.chunk_by(|a, b| {
            let (ka, kb) = (a.key.sort_key(), b.key.sort_key());
            (ka.0, ka.1, ka.2, ka.3) == (kb.0, kb.1, kb.2, kb.3)
        }) {
            let n = group.len();
            let mean = group.iter().map(|r| r.mape_percent).sum::<f64>() / n as f64;
            let stdev = if n > 1 {
                (group.iter().map(|r| (r.mape_percent - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let k = group[0].key;
            out.push(Aggregate {
                method: k.method,
                target: k.target,
                fraction: k.fraction,
                condition: k.condition,
                n,
                mean,
                stdev,
            });
        }
        out
    }

    /// Cells where the method ran under both conditions.
    pub fn degradation(&self) -> Vec<Degradation> {
        let aggs = self.aggregates();
        let find = |a: &Aggregate, c: Condition| {
            aggs.iter()
                .find(|b| b.method == a.method && b.target == a.target && b.fraction == a.fraction && b.condition == c)
        };
        aggs.iter()
            .filter(|a| a.condition == Condition::Clean)
            .filter_map(|clean| {
                let anom = find(clean, Condition::Anomalous)?;
                Some(Degradation {
                    method: clean.method,
                    target: clean.target,
                    fraction: clean.fraction,
                    clean: clean.mean,
                    anomalous: anom.mean,
                    scale: anom.mean - clean.mean,
                })
            })
            .collect()
    }

    /// Mean MAPE of one cell, if it ran.
    pub fn mean(&self, method: Method, target: Target, fraction: f64, condition: Condition) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.target == target && a.fraction == fraction && a.condition == condition)
            .map(|a| a.mean)
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(REPORT_HEADER)?;
        for r in &self.records {
            let k = &r.key;
            w.write_record([
                k.method.name().to_string(),
                k.target.name().to_string(),
                k.fraction.to_string(),
                k.condition.name().to_string(),
                k.seed.to_string(),
                r.mape_percent.to_string(),
                r.wall_ms.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("report", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Parses a report CSV. Failures are not part of that file.
    pub fn read_csv_from<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != REPORT_HEADER {
            return Err(Error::Schema(format!("unexpected report header {header:?}")));
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |c: usize| Error::Parse {
                row: i + 1,
                column: REPORT_HEADER[c].to_string(),
                value: rec[c].to_string(),
            };
            records.push(Record {
                key: LegKey {
                    method: rec[0].parse().map_err(|_| bad(0))?,
                    target: rec[1].parse().map_err(|_| bad(1))?,
                    fraction: rec[2].parse().map_err(|_| bad(2))?,
                    condition: rec[3].parse().map_err(|_| bad(3))?,
                    seed: rec[4].parse().map_err(|_| bad(4))?,
                },
                mape_percent: rec[5].parse().map_err(|_| bad(5))?,
                wall_ms: rec[6].parse().map_err(|_| bad(6))?,
            });
        }
        Ok(Self {
            records,
            failures: Vec::new(),
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file)
    }

    pub fn write_failures(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["method", "target", "fraction", "condition", "seed", "error"])?;
        for f in &self.failures {
            let k = &f.key;
            w.write_record([
                k.method.name().to_string(),
                k.target.name().to_string(),
                k.fraction.to_string(),
                k.condition.name().to_string(),
                k.seed.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_aggregates(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "method",
            "target",
            "fraction",
            "condition",
            "n",
            "mean_mape",
            "stdev_mape",
        ])?;
        for a in self.aggregates() {
            w.write_record([
                a.method.name().to_string(),
                a.target.name().to_string(),
                a.fraction.to_string(),
                a.condition.name().to_string(),
                a.n.to_string(),
                a.mean.to_string(),
                a.stdev.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_degradation(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "method",
            "target",
            "fraction",
            "clean_mape",
            "anomalous_mape",
            "degradation_scale",
        ])?;
        for d in self.degradation() {
            w.write_record([
                d.method.name().to_string(),
                d.target.name().to_string(),
                d.fraction.to_string(),
                d.clean.to_string(),
                d.anomalous.to_string(),
                d.scale.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, fraction: f64, condition: Condition, seed: u64, mape: f64) -> Record {
        Record {
            key: LegKey {
                method,
                target: Target::E,
                fraction,
                condition,
                seed,
            },
            mape_percent: mape,
            wall_ms: 0,
        }
    }

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport {
            records: vec![
                rec(Method::Edtl, 0.4, Condition::Anomalous, 2, 7.5),
                rec(Method::Direct, 0.4, Condition::Clean, 1, 10.0),
                rec(Method::Direct, 0.4, Condition::Clean, 2, 12.0),
                rec(Method::Direct, 0.4, Condition::Anomalous, 1, 13.0),
                rec(Method::Direct, 0.4, Condition::Anomalous, 2, 15.0),
                rec(Method::Edtl, 0.4, Condition::Clean, 1, 0.1 + 0.2),
                rec(Method::Knn, 0.2, Condition::Clean, 1, 20.0),
            ],
            failures: vec![],
        };
        r.sort();
        r
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_csv_to(&mut buf).unwrap();
        let back = ExperimentReport::read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,target,fraction,condition,seed,mape_percent,wall_ms\n"));
    }

    #[test]
    fn aggregates_and_degradation() {
        let r = sample();
        let d = r.degradation();
        // only direct and edtl ran under both conditions; knn did not
        assert_eq!(d.len(), 2);
        let direct = d.iter().find(|x| x.method == Method::Direct).unwrap();
        assert_eq!(direct.scale, 14.0 - 11.0);
        let agg = r.aggregates();
        let a = agg
            .iter()
            .find(|a| a.method == Method::Direct && a.condition == Condition::Clean)
            .unwrap();
        assert_eq!((a.n, a.mean), (2, 11.0));
        assert!((a.stdev - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.mean(Method::Knn, Target::E, 0.2, Condition::Clean), Some(20.0));
    }

    #[test]
    fn rejects_bad_rows() {
        let text = "method,target,fraction,condition,seed,mape_percent,wall_ms\nforest,E,0.2,clean,1,3,0\n";
        assert!(ExperimentReport::read_csv_from(text.as_bytes()).is_err());
        assert!(ExperimentReport::read_csv_from("a,b\n".as_bytes()).is_err());
    }
}
