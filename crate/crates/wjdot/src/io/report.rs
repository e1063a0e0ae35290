//! Experiment report: one record per target plus aggregates that must stay
//! recomputable from the records.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Group;
use crate::scoring::average_cer;
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// One source's share of a target's final weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeight {
    pub source_id: String,
    pub group: Group,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target_id: String,
    /// Evaluation seed that produced this record.
    pub seed: u64,
    pub si_cer: f64,
    pub adapted_cer: f64,
    pub alpha: Vec<SourceWeight>,
    pub hs: f64,
    pub ds: f64,
    pub detected_group: Group,
    pub true_group: Option<Group>,
    pub converged: bool,
    pub convergence_epoch: Option<usize>,
}

/// A target whose pipeline failed; the run records it and moves on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub average_si_cer: Option<f64>,
    pub average_adapted_cer: Option<f64>,
    /// Fraction of targets with known true group that were detected
    /// correctly; absent when no true groups are known.
    pub detection_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    /// Evaluation seeds the run covered, in execution order.
    pub seeds: Vec<u64>,
    /// Wall-clock stamp; excluded from determinism comparisons.
    pub generated_at_unix: Option<u64>,
    pub records: Vec<TargetRecord>,
    pub failures: Vec<TargetFailure>,
    pub aggregates: Aggregates,
}

impl Report {
    pub fn new(seeds: Vec<u64>, records: Vec<TargetRecord>, failures: Vec<TargetFailure>) -> Self {
        let aggregates = compute_aggregates(&records);
        Report {
            format_version: REPORT_FORMAT_VERSION,
            seeds,
            generated_at_unix: None,
            records,
            failures,
            aggregates,
        }
    }

    /// The same report with the timestamp cleared, for determinism checks.
    pub fn without_timestamp(&self) -> Report {
        Report {
            generated_at_unix: None,
            ..self.clone()
        }
    }
}

pub fn compute_aggregates(records: &[TargetRecord]) -> Aggregates {
    let si: Vec<f64> = records.iter().map(|r| r.si_cer).collect();
    let adapted: Vec<f64> = records.iter().map(|r| r.adapted_cer).collect();
    let judged: Vec<&TargetRecord> = records.iter().filter(|r| r.true_group.is_some()).collect();
    let detection_accuracy = if judged.is_empty() {
        None
    } else {
        let correct = judged
            .iter()
            .filter(|r| r.true_group == Some(r.detected_group))
            .count();
        Some(correct as f64 / judged.len() as f64)
    };
    Aggregates {
        average_si_cer: average_cer(&si).ok(),
        average_adapted_cer: average_cer(&adapted).ok(),
        detection_accuracy,
    }
}

pub fn save_report(report: &Report, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a report and verifies that the stored aggregates match the records.
pub fn load_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let report: Report = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported report version {}",
            report.format_version
        )));
    }
    let recomputed = compute_aggregates(&report.records);
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        _ => false,
    };
    if !close(recomputed.average_si_cer, report.aggregates.average_si_cer)
        || !close(
            recomputed.average_adapted_cer,
            report.aggregates.average_adapted_cer,
        )
        || !close(
            recomputed.detection_accuracy,
            report.aggregates.detection_accuracy,
        )
    {
        return Err(Error::invalid(
            "report load",
            "stored aggregates do not match the per-target records",
        ));
    }
    Ok(report)
}
