//! Inference: median-ensemble scores, IQR gating, iterative denoising and the
//! composite pipelines.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::KnnIndex2;
use crate::scorenet::{LocalScores, ScoreField, ScoreModelParams};
use crate::survey::{Patch, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub ensemble_k: usize,
    pub iqr_multiplier: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { ensemble_k: 64, iqr_multiplier: 5.0 }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_k == 0 || !(self.iqr_multiplier > 0.0) {
            return Err(Error::InvalidConfig("detect: ensemble_k >= 1 and iqr_multiplier > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub ensemble_k: usize,
    pub alpha0: f64,
    pub gamma: f64,
    pub steps: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { ensemble_k: 64, alpha0: 0.2, gamma: 0.95, steps: 30 }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_k == 0 || self.steps == 0 {
            return Err(Error::InvalidConfig("denoise: ensemble_k and steps must be positive".into()));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig("denoise: alpha0 and gamma must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Step size at step `t` (zero-based).
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha0 * self.gamma.powi(t as i32)
    }

    /// Fraction of a displacement left after all steps under an exact score field.
    pub fn residual_factor(&self) -> f64 {
        (0..self.steps).map(|t| 1.0 - self.alpha(t)).product()
    }
}

/// Median in place; the mean of the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of an empty slice");
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().max_by(f64::total_cmp).unwrap_or(m);
        0.5 * (below + m)
    }
}

/// Median of the local scores of each point's `k` nearest anchors (3D).
pub fn ensemble_score<L: LocalScores + ?Sized>(field: &L, points: &[Point], k: usize) -> Vec<f64> {
    let n = field.anchor_index().len();
    let k = if k > n {
        warn!("ensemble_k {k} exceeds {n} anchors; using {n}");
        n
    } else {
        k
    };
    if k == 0 {
        return vec![0.0; points.len()];
    }
    points
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(nbrs, idx, out), p| {
                field.anchor_index().knn_into(p, k, nbrs);
                idx.clear();
                idx.extend(nbrs.iter().map(|n| n.index));
                field.local_scores(p, idx, out);
                median(out)
            },
        )
        .collect()
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Flag scores outside `[Q1 − i·IQR, Q3 + i·IQR]`.
pub fn detect_outliers_iqr(scores: &[f64], multiplier: f64) -> Result<Vec<bool>> {
    if scores.len() < 4 {
        return Err(Error::PatchTooSmall(scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score of point {i}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - multiplier * iqr, q3 + multiplier * iqr);
    Ok(scores.iter().map(|&s| s < lo || s > hi).collect())
}

/// Gradient-ascent denoising in z against a fixed set of score fields.
pub fn denoise_with_field<L: LocalScores + ?Sized>(patch: &Patch, field: &L, cfg: &DenoiseConfig) -> Result<Patch> {
    cfg.validate()?;
    let mut pts = patch.xyz.clone();
    for t in 0..cfg.steps {
        let scores = ensemble_score(field, &pts, cfg.ensemble_k);
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of point {i} at step {t}")));
        }
        let a = cfg.alpha(t);
        for (p, s) in pts.iter_mut().zip(&scores) {
            p[2] += a * s;
        }
    }
    Ok(Patch { xyz: pts, ..patch.clone() })
}

/// Extract features once from `patch`, then denoise it.
pub fn denoise_iterative(patch: &Patch, params: &ScoreModelParams, cfg: &DenoiseConfig) -> Result<Patch> {
    let field = ScoreField::new(&patch.xyz, params)?;
    denoise_with_field(patch, &field, cfg)
}

/// Replace each masked point's z with the mean z of its nearest unmasked points in XY.
pub fn mean_interpolate(patch: &Patch, mask: &[bool], n_neighbors: usize) -> Result<Patch> {
    if mask.len() != patch.len() {
        return Err(Error::ShapeMismatch(format!("mask has {} entries for {} points", mask.len(), patch.len())));
    }
    if !mask.iter().any(|&m| m) {
        return Ok(patch.clone());
    }
    let inliers: Vec<Point> = patch.xyz.iter().zip(mask).filter(|(_, &m)| !m).map(|(p, _)| *p).collect();
    if inliers.is_empty() {
        return Err(Error::NoInliers);
    }
    let k = if inliers.len() < n_neighbors {
        warn!("only {} inliers for {n_neighbors}-neighbour interpolation", inliers.len());
        inliers.len()
    } else {
        n_neighbors
    };
    let index = KnnIndex2::from_xy(&inliers);
    let mut out = patch.clone();
    let mut buf = Vec::new();
    for (p, _) in out.xyz.iter_mut().zip(mask).filter(|(_, &m)| m) {
        index.knn_into(&[p[0], p[1]], k, &mut buf);
        p[2] = buf.iter().map(|n| inliers[n.index][2]).sum::<f64>() / buf.len() as f64;
    }
    Ok(out)
}

/// Number of neighbours averaged by the mean-interpolation step.
pub const MEAN_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Score,
    ScoreMean,
    ScoreMeanScore,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Score, Variant::ScoreMean, Variant::ScoreMeanScore];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Score => "score",
            Variant::ScoreMean => "score_mean",
            Variant::ScoreMeanScore => "score_mean_score",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// Outlier mask of a normalized patch from IQR gating of its ensemble scores.
pub fn detect_with_field<L: LocalScores + ?Sized>(patch: &Patch, field: &L, cfg: &DetectConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let scores = ensemble_score(field, &patch.xyz, cfg.ensemble_k);
    detect_outliers_iqr(&scores, cfg.iqr_multiplier)
}

/// Run one composite procedure on a normalized patch.
pub fn run_pipeline(
    patch: &Patch,
    params: &ScoreModelParams,
    variant: Variant,
    detect: &DetectConfig,
    denoise: &DenoiseConfig,
) -> Result<(Patch, Vec<bool>)> {
    let field = ScoreField::new(&patch.xyz, params)?;
    let mask = detect_with_field(patch, &field, detect)?;
    let out = match variant {
        Variant::Score => denoise_with_field(patch, &field, denoise)?,
        Variant::ScoreMean => mean_interpolate(patch, &mask, MEAN_NEIGHBORS)?,
        Variant::ScoreMeanScore => {
            let filled = mean_interpolate(patch, &mask, MEAN_NEIGHBORS)?;
            denoise_iterative(&filled, params, denoise)?
        }
    };
    Ok((out, mask))
}
