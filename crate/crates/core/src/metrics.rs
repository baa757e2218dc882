//! Detection and denoising metrics on metric-scale (denormalized) data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::KnnIndex3;
use crate::survey::{build_patches, Patch, Point, Survey};

/// Confusion counts with outliers as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { tp, fp, tn, fn_, accuracy: ratio(tp + tn, tp + fp + tn + fn_), precision, recall, f1 }
    }

    /// Pool the counts of several reports.
    pub fn merge(reports: &[ClassificationReport]) -> Self {
        let sum = |f: fn(&ClassificationReport) -> usize| reports.iter().map(f).sum();
        Self::from_counts(sum(|r| r.tp), sum(|r| r.fp), sum(|r| r.tn), sum(|r| r.fn_))
    }
}

pub fn classification_metrics(pred: &[bool], gt: &[bool]) -> Result<ClassificationReport> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), gt.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassificationReport::from_counts(tp, fp, tn, fn_))
}

fn one_sided(from: &[Point], to: &KnnIndex3) -> f64 {
    let mut buf = Vec::new();
    from.iter()
        .map(|p| {
            to.knn_into(p, 1, &mut buf);
            buf[0].dist2
        })
        .sum::<f64>()
        / from.len() as f64
}

/// Two-sided mean of squared nearest-neighbour distances.
pub fn chamfer(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPoints("chamfer input"));
    }
    let ia = KnnIndex3::new(a.to_vec());
    let ib = KnnIndex3::new(b.to_vec());
    Ok(one_sided(a, &ib) + one_sided(b, &ia))
}

/// `(mae_z, rmse_z)` between index-aligned point sets.
pub fn z_errors(denoised: &[Point], clean: &[Point]) -> Result<(f64, f64)> {
    if denoised.len() != clean.len() {
        return Err(Error::ShapeMismatch(format!("{} denoised points for {} clean", denoised.len(), clean.len())));
    }
    if denoised.is_empty() {
        return Err(Error::EmptyPoints("z_errors input"));
    }
    let n = denoised.len() as f64;
    let (abs, sq) = denoised.iter().zip(clean).fold((0.0, 0.0), |(a, s), (d, c)| {
        let e = d[2] - c[2];
        (a + e.abs(), s + e * e)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchErrors {
    pub patch_id: usize,
    pub cd: f64,
    pub mae_z: f64,
    pub rmse_z: f64,
}

/// Per-patch denoising errors and their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub cd: f64,
    pub mae_z: f64,
    pub rmse_z: f64,
    pub per_patch: Vec<PatchErrors>,
}

/// Denoising report over index-aligned patches, both in meters.
pub fn denoise_report(denoised: &[Patch], clean: &[Patch]) -> Result<DenoiseReport> {
    if denoised.len() != clean.len() {
        return Err(Error::ShapeMismatch(format!("{} denoised patches for {} clean", denoised.len(), clean.len())));
    }
    if denoised.is_empty() {
        return Err(Error::EmptyPoints("patch list"));
    }
    let per_patch = denoised
        .iter()
        .zip(clean)
        .map(|(d, c)| {
            let (mae_z, rmse_z) = z_errors(&d.xyz, &c.xyz)?;
            Ok(PatchErrors { patch_id: d.patch_id, cd: chamfer(&d.xyz, &c.xyz)?, mae_z, rmse_z })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_patch.len() as f64;
    Ok(DenoiseReport {
        cd: per_patch.iter().map(|p| p.cd).sum::<f64>() / n,
        mae_z: per_patch.iter().map(|p| p.mae_z).sum::<f64>() / n,
        rmse_z: per_patch.iter().map(|p| p.rmse_z).sum::<f64>() / n,
        per_patch,
    })
}

/// Full evaluation of a predicted survey against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub patches: usize,
    /// Present when both surveys carry masks.
    pub classification: Option<ClassificationReport>,
    pub denoise: DenoiseReport,
    /// Errors of the ground truth's raw soundings, for reference.
    pub raw: Option<DenoiseReport>,
}

fn clean_patches(patches: &[Patch]) -> Result<Vec<Patch>> {
    patches
        .iter()
        .map(|p| {
            let xyz = p.clean_xyz.clone().ok_or(Error::EmptyPoints("ground-truth clean points"))?;
            Ok(Patch { xyz, ..p.clone() })
        })
        .collect()
}

/// Compare `pred` (its clean array if present, otherwise raw) against the clean
/// points and outlier labels of `gt`, patch by patch.
pub fn evaluate_surveys(pred: &Survey, gt: &Survey, pings_per_patch: usize) -> Result<EvalReport> {
    if pred.pings != gt.pings || pred.beams != gt.beams {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.pings, pred.beams, gt.pings, gt.beams
        )));
    }
    let mut pred_pts = pred.clone();
    if let Some(c) = &pred.xyz_clean {
        pred_pts.xyz_raw = c.clone();
    }
    let pred_patches = build_patches(&pred_pts, pings_per_patch)?;
    let gt_patches = build_patches(gt, pings_per_patch)?;
    let clean = clean_patches(&gt_patches)?;
    let denoise = denoise_report(&pred_patches, &clean)?;
    let raw = denoise_report(&gt_patches, &clean)?;
    let classification = match (&pred.outlier_mask, &gt.outlier_mask) {
        (Some(_), Some(_)) => {
            let reports = pred_patches
                .iter()
                .zip(&gt_patches)
                .map(|(p, g)| classification_metrics(p.labels.as_ref().unwrap(), g.labels.as_ref().unwrap()))
                .collect::<Result<Vec<_>>>()?;
            Some(ClassificationReport::merge(&reports))
        }
        _ => None,
    };
    Ok(EvalReport { patches: pred_patches.len(), classification, denoise, raw: Some(raw) })
}

/// One CSV row per patch: `patch_id,cd,mae_z,rmse_z`.
pub fn write_patch_csv<W: Write>(mut w: W, report: &DenoiseReport) -> Result<()> {
    writeln!(w, "patch_id,cd,mae_z,rmse_z")?;
    for p in &report.per_patch {
        writeln!(w, "{},{:e},{:e},{:e}", p.patch_id, p.cd, p.mae_z, p.rmse_z)?;
    }
    Ok(())
}
