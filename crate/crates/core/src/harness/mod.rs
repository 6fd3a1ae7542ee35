//! Method comparison sweeps and their reports.

pub mod config;
pub mod methods;
pub mod metrics;
pub mod report;
pub mod svg;
pub mod sweep;

pub use config::{DataSource, ExperimentConfig, LineChoice, Preset};
pub use methods::{
    fit_method, run_direct, run_edtl, run_knn, run_method, run_transfer, Method, MethodConfig, Predictor,
};
pub use metrics::{knn_predict, mape, mape_detailed};
pub use report::{Condition, ExperimentReport, Record};
pub use sweep::{run_sweep, write_outputs, write_summaries};
