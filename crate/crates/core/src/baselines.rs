//! Classical comparators: statistical and radius outlier removal, and
//! ordinary kriging for filling removed soundings.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::denoise::{mean_interpolate, MEAN_NEIGHBORS};
use crate::error::{Error, Result};
use crate::knn::{KnnIndex2, KnnIndex3};
use crate::survey::{Patch, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticalRemovalConfig {
    pub nb_neighbors: usize,
    pub std_ratio: f64,
}

impl Default for StatisticalRemovalConfig {
    fn default() -> Self {
        Self { nb_neighbors: 30, std_ratio: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusRemovalConfig {
    /// Sphere radius in normalized patch units.
    pub radius: f64,
    pub min_neighbors: usize,
}

impl Default for RadiusRemovalConfig {
    fn default() -> Self {
        Self { radius: 0.03, min_neighbors: 30 }
    }
}

/// Flag points whose mean distance to their neighbours is unusually large.
pub fn statistical_outlier_removal(points: &[Point], cfg: &StatisticalRemovalConfig) -> Result<Vec<bool>> {
    if cfg.nb_neighbors == 0 || !(cfg.std_ratio > 0.0) {
        return Err(Error::InvalidConfig("statistical removal: nb_neighbors >= 1 and std_ratio > 0".into()));
    }
    if points.len() <= cfg.nb_neighbors {
        return Err(Error::NotEnoughPoints { needed: cfg.nb_neighbors + 1, got: points.len() });
    }
    let k = cfg.nb_neighbors;
    let index = KnnIndex3::new(points.to_vec());
    let mut buf = Vec::new();
    let mean_dist: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index.knn_into(p, k + 1, &mut buf);
            let pos = buf.iter().position(|n| n.index == i).unwrap_or(k);
            buf.remove(pos);
            buf.iter().map(|n| n.dist2.sqrt()).sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sigma = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mu + cfg.std_ratio * sigma;
    Ok(mean_dist.iter().map(|&d| d > limit).collect())
}

/// Flag points with fewer than `min_neighbors` other points inside the sphere.
pub fn radius_outlier_removal(points: &[Point], cfg: &RadiusRemovalConfig) -> Result<Vec<bool>> {
    if !(cfg.radius > 0.0) || cfg.min_neighbors == 0 {
        return Err(Error::InvalidConfig("radius removal: radius > 0 and min_neighbors >= 1".into()));
    }
    let index = KnnIndex3::new(points.to_vec());
    Ok(points
        .iter()
        .map(|p| index.within_radius(p, cfg.radius).len().saturating_sub(1) < cfg.min_neighbors)
        .collect())
}

/// Linear semivariogram `γ(h) = nugget + slope·h` for `h > 0`, `γ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub slope: f64,
    pub nugget: f64,
}

/// Lags below this count as the same location.
const ZERO_LAG: f64 = 1e-12;

impl VariogramModel {
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= ZERO_LAG {
            0.0
        } else {
            self.nugget + self.slope * h
        }
    }
}

/// Number of equal-width lag bins of the empirical semivariogram.
pub const VARIOGRAM_BINS: usize = 6;

/// Empirical semivariogram: per non-empty bin, (mean lag, mean semivariance).
pub fn empirical_semivariogram(points: &[Point]) -> Vec<(f64, f64)> {
    let n = points.len();
    let mut diameter2 = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            diameter2 = diameter2.max(xy_dist2(&points[i], &points[j]));
        }
    }
    let max_lag = 0.5 * diameter2.sqrt();
    if max_lag <= 0.0 {
        return Vec::new();
    }
    let width = max_lag / VARIOGRAM_BINS as f64;
    let mut acc = [(0.0f64, 0.0f64, 0usize); VARIOGRAM_BINS];
    for i in 0..n {
        for j in i + 1..n {
            let h = xy_dist2(&points[i], &points[j]).sqrt();
            if h <= 0.0 || h > max_lag {
                continue;
            }
            let b = ((h / width) as usize).min(VARIOGRAM_BINS - 1);
            acc[b].0 += h;
            acc[b].1 += 0.5 * (points[i][2] - points[j][2]).powi(2);
            acc[b].2 += 1;
        }
    }
    acc.iter().filter(|a| a.2 > 0).map(|a| (a.0 / a.2 as f64, a.1 / a.2 as f64)).collect()
}

/// Least-squares linear fit with slope and nugget clamped at zero.
pub fn fit_linear_variogram(points: &[Point]) -> Result<VariogramModel> {
    if points.len() < 3 {
        return Err(Error::NotEnoughPoints { needed: 3, got: points.len() });
    }
    let bins = empirical_semivariogram(points);
    if bins.is_empty() {
        return Err(Error::InvalidConfig("kriging needs distinct XY locations".into()));
    }
    let n = bins.len() as f64;
    let mean_h = bins.iter().map(|b| b.0).sum::<f64>() / n;
    let mean_g = bins.iter().map(|b| b.1).sum::<f64>() / n;
    let sxx: f64 = bins.iter().map(|b| (b.0 - mean_h).powi(2)).sum();
    let sxy: f64 = bins.iter().map(|b| (b.0 - mean_h) * (b.1 - mean_g)).sum();
    let mut slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut nugget = mean_g - slope * mean_h;
    if slope < 0.0 {
        slope = 0.0;
        nugget = mean_g;
    }
    if nugget < 0.0 {
        nugget = 0.0;
        let shh: f64 = bins.iter().map(|b| b.0 * b.0).sum();
        slope = (bins.iter().map(|b| b.0 * b.1).sum::<f64>() / shh).max(0.0);
    }
    Ok(VariogramModel { slope, nugget })
}

fn xy_dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Solve `a·x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes relative to the matrix scale.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Ordinary-kriging weights of `samples` for a query location.
pub fn kriging_weights(samples: &[Point], query: [f64; 2], model: &VariogramModel) -> Option<Vec<f64>> {
    let n = samples.len();
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = model.gamma(xy_dist2(&samples[i], &samples[j]).sqrt());
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
    }
    let q = [query[0], query[1], 0.0];
    let mut b: Vec<f64> = samples.iter().map(|s| model.gamma(xy_dist2(s, &q).sqrt())).collect();
    b.push(1.0);
    let mut x = solve_dense(a, b)?;
    x.truncate(n);
    x.iter().all(|w| w.is_finite()).then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrigingConfig {
    /// Nearest inliers (XY) used per query; `None` uses all of them.
    pub n_closest: Option<usize>,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self { n_closest: Some(64) }
    }
}

/// Predict z at each query from the inliers, with a variogram fitted to them.
pub fn kriging_interpolate(inliers: &[Point], query_xy: &[[f64; 2]], cfg: &KrigingConfig) -> Result<Vec<f64>> {
    let model = fit_linear_variogram(inliers)?;
    kriging_with_model(inliers, query_xy, &model, cfg)
}

pub fn kriging_with_model(
    inliers: &[Point],
    query_xy: &[[f64; 2]],
    model: &VariogramModel,
    cfg: &KrigingConfig,
) -> Result<Vec<f64>> {
    if inliers.len() < 3 {
        return Err(Error::NotEnoughPoints { needed: 3, got: inliers.len() });
    }
    let index = KnnIndex2::from_xy(inliers);
    let k = cfg.n_closest.unwrap_or(inliers.len()).clamp(1, inliers.len());
    let mut buf = Vec::new();
    let mut out = Vec::with_capacity(query_xy.len());
    for q in query_xy {
        index.knn_into(q, k, &mut buf);
        let local: Vec<Point> = buf.iter().map(|n| inliers[n.index]).collect();
        let z = match kriging_weights(&local, *q, model) {
            Some(w) => w.iter().zip(&local).map(|(w, p)| w * p[2]).sum(),
            None => {
                warn!("singular kriging system at ({:.4}, {:.4}); using the mean of 16 neighbours", q[0], q[1]);
                let m = MEAN_NEIGHBORS.min(local.len());
                local[..m].iter().map(|p| p[2]).sum::<f64>() / m as f64
            }
        };
        out.push(z);
    }
    Ok(out)
}

/// Replace masked points' z by kriging from the unmasked points.
pub fn kriging_fill(patch: &Patch, mask: &[bool], cfg: &KrigingConfig) -> Result<Patch> {
    if mask.len() != patch.len() {
        return Err(Error::ShapeMismatch(format!("mask has {} entries for {} points", mask.len(), patch.len())));
    }
    let inliers: Vec<Point> = patch.xyz.iter().zip(mask).filter(|(_, &m)| !m).map(|(p, _)| *p).collect();
    let queries: Vec<[f64; 2]> = patch.xyz.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| [p[0], p[1]]).collect();
    if queries.is_empty() {
        return Ok(patch.clone());
    }
    let z = kriging_interpolate(&inliers, &queries, cfg)?;
    let mut out = patch.clone();
    for (p, z) in out.xyz.iter_mut().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).zip(z) {
        p[2] = z;
    }
    Ok(out)
}

/// Outlier detector used by the baseline pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BaselineMethod {
    Statistical(StatisticalRemovalConfig),
    Radius(RadiusRemovalConfig),
}

impl BaselineMethod {
    pub fn detect(&self, points: &[Point]) -> Result<Vec<bool>> {
        match self {
            BaselineMethod::Statistical(c) => statistical_outlier_removal(points, c),
            BaselineMethod::Radius(c) => radius_outlier_removal(points, c),
        }
    }

    /// Stable, human-readable description used in sweep tables.
    pub fn label(&self) -> String {
        match self {
            BaselineMethod::Statistical(c) => {
                format!("statistical(nb_neighbors={:03},std_ratio={:.3})", c.nb_neighbors, c.std_ratio)
            }
            BaselineMethod::Radius(c) => format!("radius(radius={:.4},min_neighbors={:03})", c.radius, c.min_neighbors),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Mean,
    Kriging,
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolation::Mean => "mean",
            Interpolation::Kriging => "kriging",
        })
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Interpolation::Mean),
            "kriging" => Ok(Interpolation::Kriging),
            _ => Err(Error::InvalidConfig(format!("unknown interpolation {s:?}"))),
        }
    }
}

/// Detect with a classical method, then fill the flagged points.
pub fn run_baseline(
    patch: &Patch,
    method: &BaselineMethod,
    interp: Interpolation,
    kriging: &KrigingConfig,
) -> Result<(Patch, Vec<bool>)> {
    let mask = method.detect(&patch.xyz)?;
    let out = match interp {
        Interpolation::Mean => mean_interpolate(patch, &mask, MEAN_NEIGHBORS)?,
        Interpolation::Kriging => kriging_fill(patch, &mask, kriging)?,
    };
    Ok((out, mask))
}
