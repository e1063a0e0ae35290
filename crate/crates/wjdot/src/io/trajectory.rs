//! CSV export of the per-epoch weight trajectory recorded during adaptation.

use std::fs;
use std::path::Path;

use crate::adaptation::AdaptResult;
use crate::{Error, Result};

/// Writes `epoch,source_id,group,alpha` rows, one per epoch x source.
///
/// Epochs are numbered from 1. Fails when the result carries no trajectory
/// (adaptation was run with trajectory recording disabled).
pub fn export_trajectory(result: &AdaptResult, path: &Path) -> Result<()> {
    if result.alpha_trajectory.is_empty() {
        return Err(Error::invalid(
            "trajectory export",
            "the adaptation result carries no recorded trajectory",
        ));
    }
    let mut out = String::from("epoch,source_id,group,alpha\n");
    for (epoch, alpha) in result.alpha_trajectory.iter().enumerate() {
        for (source, weight) in result.sources.iter().zip(alpha.as_slice()) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                epoch + 1,
                source.id,
                source.group.as_str(),
                weight
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
