use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::graph::{knn_graph, knn_graph_features, KnnGraph};
use super::params::{EdgeConvParams, ScoreModelParams};
use crate::error::{Error, Result};
use crate::survey::Point;

/// Negative slope of the EdgeConv activation.
pub const LEAKY_SLOPE: f64 = 0.2;

fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Neighbour that won the max, per point and channel.
    argmax: Vec<u32>,
}

/// Intermediate values kept by [`forward_features`] for the backward pass.
pub struct FeatureCache {
    layers: Vec<LayerCache>,
}

pub(crate) fn points_matrix(points: &[Point]) -> Result<Array2<f64>> {
    if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("input point {i}")));
    }
    Ok(Array2::from_shape_fn((points.len(), 3), |(i, c)| points[i][c]))
}

fn edgeconv_forward(h: &Array2<f64>, graph: &KnnGraph, p: &EdgeConvParams) -> (Array2<f64>, Array2<f64>, Vec<u32>) {
    let n = h.nrows();
    let c_out = p.bias.len();
    let mut pre = h.dot(&(&p.w_center - &p.w_edge)) + &p.bias;
    let g = h.dot(&p.w_edge);
    let mut argmax = vec![0u32; n * c_out];
    let mut best = Array1::<f64>::zeros(c_out);
    for i in 0..n {
        let row = graph.row(i);
        best.assign(&g.row(row[0]));
        let arg = &mut argmax[i * c_out..(i + 1) * c_out];
        arg.iter_mut().for_each(|a| *a = row[0] as u32);
        for &j in &row[1..] {
            for (c, &v) in g.row(j).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    arg[c] = j as u32;
                }
            }
        }
        let mut pr = pre.row_mut(i);
        pr += &best;
    }
    let out = pre.mapv(lrelu);
    (out, pre, argmax)
}

/// Run the EdgeConv stack, keeping what the backward pass needs.
pub fn forward_features(points: &[Point], params: &ScoreModelParams) -> Result<(Array2<f64>, FeatureCache)> {
    let x = points_matrix(points)?;
    let k = params.config.features.graph_k;
    let n = points.len();
    let mut feats = Array2::zeros((n, params.feature_width()));
    let mut layers = Vec::with_capacity(params.edge_convs.len());
    let mut h = x;
    let mut col = 0;
    for (l, p) in params.edge_convs.iter().enumerate() {
        let graph = if l == 0 { knn_graph(points, k)? } else { knn_graph_features(h.view(), k)? };
        let (out, pre, argmax) = edgeconv_forward(&h, &graph, p);
        feats.slice_mut(s![.., col..col + out.ncols()]).assign(&out);
        col += out.ncols();
        layers.push(LayerCache { input: h, pre, argmax });
        h = out;
    }
    Ok((feats, FeatureCache { layers }))
}

/// Per-point features `[N × F]`, the concatenated EdgeConv outputs.
pub fn extract_features(points: &[Point], params: &ScoreModelParams) -> Result<Array2<f64>> {
    forward_features(points, params).map(|(f, _)| f)
}

/// Accumulate parameter gradients given `d loss / d features`.
pub fn backward_features(
    cache: &FeatureCache,
    params: &ScoreModelParams,
    dfeat: ArrayView2<f64>,
    grads: &mut [EdgeConvParams],
) {
    let widths: Vec<usize> = params.edge_convs.iter().map(|p| p.bias.len()).collect();
    let mut offsets = vec![0; widths.len()];
    for l in 1..widths.len() {
        offsets[l] = offsets[l - 1] + widths[l - 1];
    }
    let mut carry: Option<Array2<f64>> = None;
    for l in (0..params.edge_convs.len()).rev() {
        let p = &params.edge_convs[l];
        let cache = &cache.layers[l];
        let c_out = widths[l];
        let mut dy = dfeat.slice(s![.., offsets[l]..offsets[l] + c_out]).to_owned();
        if let Some(c) = carry.take() {
            dy += &c;
        }
        let mut du = dy;
        Zip::from(&mut du).and(&cache.pre).for_each(|d, &z| {
            if z <= 0.0 {
                *d *= LEAKY_SLOPE;
            }
        });
        let n = du.nrows();
        let mut dg = Array2::<f64>::zeros((n, c_out));
        for i in 0..n {
            let arg = &cache.argmax[i * c_out..(i + 1) * c_out];
            for c in 0..c_out {
                dg[[arg[c] as usize, c]] += du[[i, c]];
            }
        }
        let h = &cache.input;
        let g = &mut grads[l];
        g.w_center += &h.t().dot(&du);
        g.w_edge += &h.t().dot(&(&dg - &du));
        g.bias += &du.sum_axis(Axis(0));
        if l > 0 {
            let wd = &p.w_center - &p.w_edge;
            carry = Some(du.dot(&wd.t()) + dg.dot(&p.w_edge.t()));
        }
    }
}
