//! Experiment harness: loads encoded datasets, trains and evaluates the
//! models, and renders the occluded-versus-clean comparison report.

pub mod benchmark;
pub mod dataset;
mod error;
pub mod eval;
pub mod normalize;
pub mod report;
pub mod train;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkRun, Condition};
pub use dataset::{Dataset, DatasetPaths};
pub use error::HarnessError;
pub use eval::{evaluate, Evaluation};
pub use report::{emit_report, write_timings, TrainReport, REPORT_VERSION};
pub use train::{train_model, TrainConfig, TrainLog};
