use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::methods::run_method;
use super::report::{Condition, ExperimentReport, Failure, LegKey, Record};
use super::svg::sweep_charts;
use crate::dataset::{inject_anomalies, split, subsample_fraction, AnomalySpec, Dataset};
use crate::error::{Error, Result};
use crate::simulator::Target;
use crate::transfer::pretrain;

fn conditions(cfg: &ExperimentConfig) -> Vec<Condition> {
    if cfg.anomaly.is_some() {
        vec![Condition::Clean, Condition::Anomalous]
    } else {
        vec![Condition::Clean]
    }
}

fn all_legs(cfg: &ExperimentConfig, target: Target, seed: u64) -> Vec<LegKey> {
    let mut keys = Vec::new();
    for &fraction in &cfg.fractions {
        for condition in conditions(cfg) {
            for &method in &cfg.methods {
                keys.push(LegKey {
                    method,
                    target,
                    fraction,
                    condition,
                    seed,
                });
            }
        }
    }
    keys
}

fn fail_all(keys: Vec<LegKey>, err: &Error) -> Vec<std::result::Result<Record, Failure>> {
    keys.into_iter()
        .map(|key| {
            Err(Failure {
                key,
                message: err.to_string(),
            })
        })
        .collect()
}

/// Every leg for one (target, seed). Legs share the split and the pretrained model.
fn run_cell(
    cfg: &ExperimentConfig,
    target: Target,
    seed: u64,
    data: &Result<(Dataset, Dataset)>,
) -> Vec<std::result::Result<Record, Failure>> {
    let (source, target_ds) = match data {
        Ok(d) => d,
        Err(e) => return fail_all(all_legs(cfg, target, seed), e),
    };
    let (pool, test) = match split(target_ds, 1.0 - cfg.test_fraction, seed) {
        Ok(s) => s,
        Err(e) => return fail_all(all_legs(cfg, target, seed), &e),
    };
    let mcfg = cfg.method_config(seed);
    let pre = if cfg.methods.iter().any(|m| m.needs_pretrained()) {
        Some(pretrain(source, &mcfg.edtl.train, &cfg.architecture))
    } else {
        None
    };

    let mut out = Vec::new();
    for &fraction in &cfg.fractions {
        let clean = subsample_fraction(&pool, fraction, seed);
        for condition in conditions(cfg) {
            let train = match (&clean, condition, cfg.anomaly) {
                (Err(e), ..) => Err(Error::InvalidArgument(e.to_string())),
                (Ok(ds), Condition::Clean, _) => Ok(ds.clone()),
                (Ok(ds), Condition::Anomalous, Some(spec)) => inject_anomalies(
                    ds,
                    &AnomalySpec {
                        seed: spec.seed.wrapping_add(seed),
                        ..spec
                    },
                ),
                (Ok(_), Condition::Anomalous, None) => unreachable!("anomalous legs need a spec"),
            };
            for &method in &cfg.methods {
                let key = LegKey {
                    method,
                    target,
                    fraction,
                    condition,
                    seed,
                };
                let started = Instant::now();
                let result = train.as_ref().map_err(|e| e.to_string()).and_then(|train| {
                    let pre = match (&pre, method.needs_pretrained()) {
                        (Some(Ok(p)), true) => Some(p),
                        (Some(Err(e)), true) => return Err(format!("pretraining failed: {e}")),
                        _ => None,
                    };
                    run_method(method, pre, train, &test, &mcfg).map_err(|e| e.to_string())
                });
                let wall_ms = if cfg.timing {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                };
                out.push(match result {
                    Ok(mape_percent) => Ok(Record {
                        key,
                        mape_percent,
                        wall_ms,
                    }),
                    Err(message) => Err(Failure { key, message }),
                });
            }
        }
    }
    out
}

/// Runs the cartesian product of targets, seeds, fractions, conditions and
/// methods. Leg failures are recorded and the sweep carries on; results are
/// sorted so output does not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let loaded = cfg.data.load()?;
    let data: Vec<(Target, Result<(Dataset, Dataset)>)> = cfg.targets.iter().map(|&t| (t, loaded.pair(t))).collect();
    let jobs: Vec<(usize, u64)> = (0..data.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let work = || -> Vec<_> {
        jobs.par_iter()
            .flat_map_iter(|&(i, seed)| run_cell(cfg, data[i].0, seed, &data[i].1))
            .collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut report = ExperimentReport::default();
    for r in results {
        match r {
            Ok(rec) => report.records.push(rec),
            Err(f) => report.failures.push(f),
        }
    }
    report.sort();
    Ok(report)
}

/// Writes `report.csv`, `failures.csv`, `aggregates.csv`, `degradation.csv`
/// and one SVG chart per (target, condition).
pub fn write_outputs(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.write_csv(dir.join("report.csv"))?;
    report.write_failures(dir.join("failures.csv"))?;
    write_summaries(report, dir)
}

/// Aggregates, degradation table and charts derived from a report.
pub fn write_summaries(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.write_aggregates(dir.join("aggregates.csv"))?;
    report.write_degradation(dir.join("degradation.csv"))?;
    for (stem, svg) in sweep_charts(report) {
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DataSource;
    use crate::harness::methods::Method;
    use crate::nn::TrainConfig;
    use crate::transfer::Architecture;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Simulated {
                source: crate::harness::config::LineChoice::Preset(crate::harness::config::Preset::Source),
                target: crate::harness::config::LineChoice::Preset(crate::harness::config::Preset::Target),
                n_source: 200,
                n_target: 80,
                seed: 3,
                fabric: crate::simulator::FabricType::Nylon,
            },
            fractions: vec![0.5, 1.0],
            methods: vec![Method::Direct, Method::Knn],
            seeds: vec![1],
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            architecture: Architecture {
                hidden_layers: 2,
                hidden_width: 8,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cardinality_and_order() {
        let report = run_sweep(&tiny()).unwrap();
        assert_eq!(report.records.len(), 4);
        assert!(report.failures.is_empty());
        assert!(report.degradation().is_empty());
        let mut sorted = report.clone();
        sorted.sort();
        assert_eq!(sorted, report);
    }

    #[test]
    fn anomalies_double_the_legs() {
        let cfg = ExperimentConfig {
            anomaly: Some(AnomalySpec::default()),
            ..tiny()
        };
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.records.len(), 8);
        assert_eq!(report.degradation().len(), 4);
    }

    #[test]
    fn failures_are_recorded() {
        let cfg = ExperimentConfig { knn_k: 1000, ..tiny() };
        // k larger than the training set is clamped, so knn still runs
        assert_eq!(run_sweep(&cfg).unwrap().records.len(), 4);
        let bad = ExperimentConfig {
            data: DataSource::Csv {
                source: "/nonexistent/source.csv".into(),
                target: "/nonexistent/target.csv".into(),
            },
            ..tiny()
        };
        let report = run_sweep(&bad).unwrap();
        assert!(report.records.is_empty());
        assert_eq!(report.failures.len(), 4);
    }
}
