//! File formats: plain-text datasets, JSON model checkpoints and reports,
//! CSV weight trajectories, and the experiment configuration schema. All
//! formats carry a version field and round-trip exactly.

mod checkpoint;
mod config;
mod dataset;
mod report;
mod trajectory;

pub use checkpoint::{load_model, save_model};
pub use config::ExperimentConfig;
pub use dataset::{load_dataset, save_dataset, Dataset};
pub use report::{
    load_report, save_report, Aggregates, Report, SourceWeight, TargetFailure, TargetRecord,
    REPORT_FORMAT_VERSION,
};
pub use trajectory::export_trajectory;
