use ndarray::Array1;
use rand::Rng;

use super::decoder::{decoder_backward, decoder_forward};
use super::features::{backward_features, forward_features};
use super::params::ScoreModelParams;
use crate::error::{Error, Result};
use crate::knn::{nn_xy, KnnIndex2, KnnIndex3};
use crate::survey::{Patch, Point};

/// Vertical offset from `query` to its clean correspondence (nearest clean point in XY).
pub fn gt_score(query: &Point, clean_index: &KnnIndex2, clean_z: &[f64]) -> Result<f64> {
    if clean_index.is_empty() {
        return Err(Error::EmptyPoints("clean cloud"));
    }
    let j = nn_xy(query, clean_index)?;
    Ok(clean_z[j] - query[2])
}

/// Per-patch supervision data that does not depend on the model.
#[derive(Debug, Clone)]
pub struct LossTargets {
    /// Plain queries are drawn from this many nearest candidates of each anchor.
    pub query_k: usize,
    /// Candidates stored per anchor: its nearest raw points in 3D, nearest first, itself included.
    pub width: usize,
    pub candidates: Vec<usize>,
    /// Ground-truth score of every raw point.
    pub gt: Vec<f64>,
}

impl LossTargets {
    pub fn new(patch: &Patch, query_k: usize) -> Result<Self> {
        Self::with_width(patch, query_k, query_k)
    }

    /// Targets keeping `width >= query_k` candidates per anchor for lifted queries.
    pub fn with_width(patch: &Patch, query_k: usize, width: usize) -> Result<Self> {
        let clean = patch.clean_xyz.as_ref().ok_or(Error::EmptyPoints("clean reference"))?;
        if clean.len() != patch.len() {
            return Err(Error::ShapeMismatch("clean reference length differs from patch".into()));
        }
        if patch.is_empty() {
            return Err(Error::EmptyPoints("patch"));
        }
        let clean_index = KnnIndex2::from_xy(clean);
        let clean_z: Vec<f64> = clean.iter().map(|p| p[2]).collect();
        let gt = patch.xyz.iter().map(|q| gt_score(q, &clean_index, &clean_z)).collect::<Result<_>>()?;
        let query_k = query_k.min(patch.len());
        let width = width.max(query_k).min(patch.len());
        let raw = KnnIndex3::new(patch.xyz.clone());
        let mut candidates = Vec::with_capacity(patch.len() * width);
        let mut buf = Vec::new();
        for p in &patch.xyz {
            raw.knn_into(p, width, &mut buf);
            candidates.extend(buf.iter().map(|n| n.index));
        }
        Ok(Self { query_k, width, candidates, gt })
    }
}

/// One supervision pair: raw point `query`, shifted up by `lift`, scored by anchor `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuerySample {
    pub anchor: usize,
    pub query: usize,
    /// Vertical shift of the query, normalized z units; its target shifts by `-lift`.
    pub lift: f64,
}

impl QuerySample {
    fn point(&self, xyz: &[Point]) -> Point {
        let p = xyz[self.query];
        [p[0], p[1], p[2] + self.lift]
    }

    fn target(&self, targets: &LossTargets) -> f64 {
        targets.gt[self.query] - self.lift
    }
}

/// Draw `m` queries per inlier anchor, uniformly with replacement.
///
/// Draws are made for every anchor in index order and discarded for outliers, so
/// relabelling one anchor does not change the samples of any other.
pub fn sample_queries(
    labels: &[bool],
    targets: &LossTargets,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<QuerySample>> {
    if !labels.iter().any(|&o| !o) {
        return Err(Error::NoInliers);
    }
    let (k, w) = (targets.query_k, targets.width);
    let mut out = Vec::with_capacity(labels.len() * m);
    for (i, &outlier) in labels.iter().enumerate() {
        for _ in 0..m {
            let q = targets.candidates[i * w + rng.random_range(0..k)];
            if !outlier {
                out.push(QuerySample { anchor: i, query: q, lift: 0.0 });
            }
        }
    }
    Ok(out)
}

/// Draw `m` vertically shifted queries per inlier anchor: one of all `width` stored
/// candidates, moved by a signed offset of magnitude uniform in `(0, max_lift]`.
///
/// Displaced queries expose each local field to offsets far beyond the inlier noise.
pub fn sample_lifted_queries(
    labels: &[bool],
    targets: &LossTargets,
    m: usize,
    max_lift: f64,
    rng: &mut impl Rng,
) -> Result<Vec<QuerySample>> {
    if !labels.iter().any(|&o| !o) {
        return Err(Error::NoInliers);
    }
    let w = targets.width;
    let mut out = Vec::with_capacity(labels.len() * m);
    for (i, &outlier) in labels.iter().enumerate() {
        for _ in 0..m {
            let q = targets.candidates[i * w + rng.random_range(0..w)];
            let magnitude = max_lift * (1.0 - rng.random::<f64>());
            let lift = if rng.random::<bool>() { magnitude } else { -magnitude };
            if !outlier {
                out.push(QuerySample { anchor: i, query: q, lift });
            }
        }
    }
    Ok(out)
}

/// Mean squared error per anchor, `None` for anchors without samples.
pub fn anchor_losses(
    patch: &Patch,
    targets: &LossTargets,
    samples: &[QuerySample],
    params: &ScoreModelParams,
) -> Result<Vec<Option<f64>>> {
    let feats = forward_features(&patch.xyz, params)?.0;
    let pairs: Vec<(usize, Point)> = samples.iter().map(|s| (s.anchor, s.point(&patch.xyz))).collect();
    let batch = decoder_forward(&pairs, &patch.xyz, feats.view(), params);
    let mut sums = vec![(0.0, 0usize); patch.len()];
    for (s, &pred) in samples.iter().zip(batch.scores()) {
        let e = pred - s.target(targets);
        sums[s.anchor].0 += e * e;
        sums[s.anchor].1 += 1;
    }
    Ok(sums.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
}

/// Loss of a labelled, normalized patch: squared score error averaged over each
/// inlier anchor's queries, then over inlier anchors.
pub fn patch_loss(
    patch: &Patch,
    params: &ScoreModelParams,
    query_k: usize,
    queries_per_point: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let labels = patch.labels.as_ref().ok_or(Error::EmptyPoints("labels"))?;
    let targets = LossTargets::new(patch, query_k)?;
    let samples = sample_queries(labels, &targets, queries_per_point, rng)?;
    let per_anchor = anchor_losses(patch, &targets, &samples, params)?;
    let terms: Vec<f64> = per_anchor.into_iter().flatten().collect();
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Loss and its gradient for fixed samples. Every anchor must have the same
/// number of samples, as produced by [`sample_queries`] and [`sample_lifted_queries`].
pub fn loss_and_grad(
    patch: &Patch,
    targets: &LossTargets,
    samples: &[QuerySample],
    params: &ScoreModelParams,
) -> Result<(f64, ScoreModelParams)> {
    if samples.is_empty() {
        return Err(Error::NoInliers);
    }
    let (feats, cache) = forward_features(&patch.xyz, params)?;
    let pairs: Vec<(usize, Point)> = samples.iter().map(|s| (s.anchor, s.point(&patch.xyz))).collect();
    let batch = decoder_forward(&pairs, &patch.xyz, feats.view(), params);
    let n = samples.len() as f64;
    let err: Array1<f64> = samples.iter().zip(batch.scores()).map(|(s, &p)| p - s.target(targets)).collect();
    let loss = err.iter().map(|e| e * e).sum::<f64>() / n;
    let dscores = err.mapv(|e| 2.0 * e / n);
    let mut grads = params.zeros_like();
    let dfeat = decoder_backward(&batch, feats.view(), params, &dscores, &mut grads.decoder);
    backward_features(&cache, params, dfeat.view(), &mut grads.edge_convs);
    Ok((loss, grads))
}
