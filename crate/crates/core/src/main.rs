use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use edtl::harness::config::{load_target_csv, DataSource, LineChoice, Preset};
use edtl::harness::{run_sweep, write_outputs, write_summaries, ExperimentConfig, ExperimentReport, Method, Predictor};
use edtl::simulator::{make_domain_pair, FabricType, LineProfile, Target};
use edtl::transfer::{pretrain, PretrainedModel};

#[derive(Parser)]
#[command(
    name = "edtl",
    version,
    about = "Ensemble deep transfer learning for production-line regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated source/target pair of CSV files.
    Simulate(SimulateArgs),
    /// Train a network on source-line data.
    Pretrain(PretrainArgs),
    /// Train a direct, transfer, EDTL or k-NN model on target-line data.
    Train(TrainArgs),
    /// Append a prediction column to a CSV file.
    Predict(PredictArgs),
    /// Run a full experiment sweep.
    Sweep(SweepArgs),
    /// Rebuild summaries and charts from a report CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(cfg.seeds[0])
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_source: Option<usize>,
    #[arg(long)]
    n_target: Option<usize>,
    /// source, target, mis_shifted or aligned
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// nylon or polyester
    #[arg(long)]
    fabric: Option<String>,
}

#[derive(Args)]
struct PretrainArgs {
    /// Source-line CSV.
    #[arg(long)]
    source: PathBuf,
    /// Column to model (E, M, W or D).
    #[arg(long, default_value = "E")]
    target_column: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    /// direct, transfer, edtl or knn
    #[arg(long)]
    method: String,
    /// Target-line CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "E")]
    target_column: String,
    /// Directory written by `pretrain`; required for transfer and edtl.
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Name of the appended column.
    #[arg(long, default_value = "prediction")]
    column: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    /// report.csv from a sweep.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

const PRETRAINED_FILE: &str = "pretrained.json";

fn parse_preset(s: &str) -> Result<Preset> {
    Ok(match s {
        "source" => Preset::Source,
        "target" => Preset::Target,
        "mis_shifted" => Preset::MisShifted,
        "aligned" => Preset::Aligned,
        _ => bail!("unknown line preset {s:?}"),
    })
}

#[derive(Serialize)]
struct SimManifest {
    seed: u64,
    source: LineProfile,
    target: LineProfile,
    n_source: usize,
    n_target: usize,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let DataSource::Simulated {
        mut source,
        mut target,
        mut n_source,
        mut n_target,
        mut seed,
        mut fabric,
    } = cfg.data
    else {
        bail!("config data source is not simulated");
    };
    if let Some(s) = &a.source {
        source = LineChoice::Preset(parse_preset(s)?);
    }
    if let Some(t) = &a.target {
        target = LineChoice::Preset(parse_preset(t)?);
    }
    if let Some(f) = &a.fabric {
        fabric = match f.as_str() {
            "nylon" => FabricType::Nylon,
            "polyester" => FabricType::Polyester,
            _ => bail!("unknown fabric {f:?}"),
        };
    }
    n_source = a.n_source.unwrap_or(n_source);
    n_target = a.n_target.unwrap_or(n_target);
    seed = a.seed.unwrap_or(seed);
    let (sp, tp) = (source.resolve(fabric), target.resolve(fabric));
    let (s, t) = make_domain_pair(&sp, &tp, n_source, n_target, seed)?;
    create_dir(&a.out)?;
    s.write_csv(a.out.join("source.csv"))?;
    t.write_csv(a.out.join("target.csv"))?;
    let manifest = SimManifest {
        seed,
        source: sp,
        target: tp,
        n_source,
        n_target,
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} source and {} target rows to {}",
        n_source,
        n_target,
        a.out.display()
    );
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn run_pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let target: Target = a.target_column.parse()?;
    let source = load_target_csv(&a.source, target)?;
    let train_cfg = cfg.train.with_seed(a.common.seed(&cfg));
    let pre = pretrain(&source, &train_cfg, &cfg.architecture)?;
    create_dir(&a.out)?;
    pre.save(a.out.join(PRETRAINED_FILE))?;
    println!(
        "train MSE {:.6}, validation MSE {:.6} (standardized units)",
        pre.train_report.train_mse, pre.train_report.validation_mse
    );
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let method: Method = a.method.parse()?;
    let target: Target = a.target_column.parse()?;
    let data = load_target_csv(&a.data, target)?;
    let pre = match (&a.pretrained, method.needs_pretrained()) {
        (Some(dir), true) => Some(PretrainedModel::load(dir.join(PRETRAINED_FILE))?),
        (None, true) => bail!("--pretrained is required for {method}"),
        _ => None,
    };
    let mcfg = cfg.method_config(a.common.seed(&cfg));
    let model = edtl::harness::fit_method(method, pre.as_ref(), &data, &mcfg)?;
    model.save(&a.out)?;
    let fitted = model.predict_batch(&data)?;
    let train_mape = edtl::harness::mape(data.targets(), &fitted)?;
    println!(
        "{method} model saved to {} (training MAPE {train_mape:.3}%)",
        a.out.display()
    );
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let model = Predictor::load(&a.model)?;
    let names = model.schema().names().to_vec();
    let mut rdr = csv::Reader::from_path(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let header = rdr.headers()?.clone();
    if header.iter().any(|h| h == a.column) {
        bail!("input already has a {:?} column", a.column);
    }
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.trim() == n)
                .with_context(|| format!("missing column {n:?}"))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut features = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (&c, name) in cols.iter().zip(&names) {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .with_context(|| format!("row {}: column {name:?} has non-numeric value {cell:?}", i + 1))?;
            features.push(v);
        }
        records.push(rec);
    }
    if records.is_empty() {
        bail!("{} has no data rows", a.input.display());
    }
    let schema = edtl::dataset::FeatureSchema::new(names, "__unused_target__")?;
    let ds = edtl::dataset::Dataset::from_flat(schema, features, vec![0.0; records.len()])?;
    let preds = model.predict_batch(&ds)?;
    let mut w = csv::Writer::from_path(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    let mut out_header: Vec<&str> = header.iter().collect();
    out_header.push(&a.column);
    w.write_record(&out_header)?;
    for (rec, p) in records.iter().zip(&preds) {
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        row.push(p.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("wrote {} predictions to {}", preds.len(), a.output.display());
    Ok(())
}

fn run_sweep_cmd(a: &SweepArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let report = run_sweep(&cfg)?;
    write_outputs(&report, &a.out)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml()?)?;
    println!(
        "{} records, {} failures written to {}",
        report.records.len(),
        report.failures.len(),
        a.out.display()
    );
    for f in &report.failures {
        eprintln!(
            "failed: {} {} {} {} seed {}: {}",
            f.key.method, f.key.target, f.key.fraction, f.key.condition, f.key.seed, f.message
        );
    }
    Ok(())
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let report = ExperimentReport::read_csv(&a.input)?;
    write_summaries(&report, &a.out)?;
    println!(
        "summaries for {} records written to {}",
        report.records.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Pretrain(a) => run_pretrain(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause, so skip repeats
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
