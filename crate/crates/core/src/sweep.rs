//! Hyperparameter sweeps ranked by F1.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineMethod, RadiusRemovalConfig, StatisticalRemovalConfig};
use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, ClassificationReport};
use crate::survey::Patch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub report: ClassificationReport,
    /// True for the first row, the F1 argmax.
    pub best: bool,
}

/// Order by F1 (descending), ties by label; mark the winner.
pub fn rank_results(results: Vec<(String, ClassificationReport)>) -> Result<Vec<SweepRow>> {
    if results.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    let mut rows: Vec<SweepRow> =
        results.into_iter().map(|(label, report)| SweepRow { label, report, best: false }).collect();
    rows.sort_by(|a, b| b.report.f1.total_cmp(&a.report.f1).then_with(|| a.label.cmp(&b.label)));
    rows[0].best = true;
    Ok(rows)
}

/// Pooled detection report of one method over labelled, normalized patches.
pub fn evaluate_baseline(patches: &[Patch], method: &BaselineMethod) -> Result<ClassificationReport> {
    let reports = patches
        .par_iter()
        .map(|p| {
            let gt = p.labels.as_ref().ok_or(Error::EmptyPoints("labels"))?;
            classification_metrics(&method.detect(&p.xyz)?, gt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationReport::merge(&reports))
}

pub fn sweep_baselines(patches: &[Patch], grid: &[BaselineMethod]) -> Result<Vec<SweepRow>> {
    let results = grid
        .iter()
        .map(|m| Ok((m.label(), evaluate_baseline(patches, m)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_results(results)
}

/// Grid around the published settings (nb 30 / std 1.5, radius 0.03 / 30),
/// which are always members.
pub fn default_baseline_grid() -> Vec<BaselineMethod> {
    let mut grid = Vec::new();
    for nb in [8, 16, 30, 48] {
        for std_ratio in [0.5, 1.0, 1.5, 2.0, 3.0] {
            grid.push(BaselineMethod::Statistical(StatisticalRemovalConfig { nb_neighbors: nb, std_ratio }));
        }
    }
    for radius in [0.01, 0.02, 0.03, 0.05, 0.08] {
        for min_neighbors in [2, 4, 8, 16, 30] {
            grid.push(BaselineMethod::Radius(RadiusRemovalConfig { radius, min_neighbors }));
        }
    }
    grid
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "rank,label,f1,precision,recall,accuracy,best")?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            w,
            "{},\"{}\",{:.6},{:.6},{:.6},{:.6},{}",
            i + 1,
            r.label,
            r.report.f1,
            r.report.precision,
            r.report.recall,
            r.report.accuracy,
            r.best
        )?;
    }
    Ok(())
}
