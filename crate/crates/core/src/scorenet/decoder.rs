use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{DenseParams, ScoreModelParams};
use crate::error::{Error, Result};
use crate::survey::Point;

/// Local score of `query` under anchor `anchor`'s field, evaluated layer by layer.
pub fn local_score(
    query: &Point,
    anchor: usize,
    anchors: &[Point],
    features: ArrayView2<f64>,
    params: &ScoreModelParams,
) -> Result<f64> {
    if anchor >= anchors.len() || anchor >= features.nrows() {
        return Err(Error::OutOfRange { index: anchor, len: anchors.len().min(features.nrows()) });
    }
    let r = anchors[anchor];
    let mut x: Array1<f64> = [query[0] - r[0], query[1] - r[1], query[2] - r[2]]
        .into_iter()
        .chain(features.row(anchor).iter().copied())
        .collect();
    let last = params.decoder.len() - 1;
    for (l, layer) in params.decoder.iter().enumerate() {
        x = x.dot(&layer.weight) + &layer.bias;
        if l < last {
            x.mapv_inplace(|v| v.max(0.0));
        }
    }
    let skip = if params.config.decoder.vertical_skip { query[2] - r[2] } else { 0.0 };
    Ok(x[0] - skip)
}

/// Forward state for a batch of `(anchor, query)` pairs on one patch.
pub struct DecoderBatch {
    anchors: Vec<usize>,
    rel: Array2<f64>,
    /// Post-activation input of every layer after the first.
    acts: Vec<Array2<f64>>,
    scores: Array1<f64>,
}

impl DecoderBatch {
    pub fn scores(&self) -> &Array1<f64> {
        &self.scores
    }
}

/// Evaluate many local scores at once.
///
/// The first layer is split into its position and feature blocks so the feature
/// product is computed once per anchor rather than once per pair.
pub fn decoder_forward(
    pairs: &[(usize, Point)],
    anchors: &[Point],
    features: ArrayView2<f64>,
    params: &ScoreModelParams,
) -> DecoderBatch {
    let first = &params.decoder[0];
    let w_pos = first.weight.slice(s![0..3, ..]);
    let w_feat = first.weight.slice(s![3.., ..]);
    let per_anchor = features.dot(&w_feat) + &first.bias;
    let rel = Array2::from_shape_fn((pairs.len(), 3), |(i, c)| pairs[i].1[c] - anchors[pairs[i].0][c]);
    let mut z = rel.dot(&w_pos);
    for (mut row, &(a, _)) in z.axis_iter_mut(Axis(0)).zip(pairs) {
        row += &per_anchor.row(a);
    }
    let mut acts = Vec::with_capacity(params.decoder.len() - 1);
    for layer in &params.decoder[1..] {
        z.mapv_inplace(|v| v.max(0.0));
        let next = z.dot(&layer.weight) + &layer.bias;
        acts.push(z);
        z = next;
    }
    let mut scores = z.column(0).to_owned();
    if params.config.decoder.vertical_skip {
        scores -= &rel.column(2);
    }
    DecoderBatch { anchors: pairs.iter().map(|p| p.0).collect(), rel, acts, scores }
}

/// Backpropagate `d loss / d score`; returns `d loss / d features`.
pub fn decoder_backward(
    batch: &DecoderBatch,
    features: ArrayView2<f64>,
    params: &ScoreModelParams,
    dscores: &Array1<f64>,
    grads: &mut [DenseParams],
) -> Array2<f64> {
    let mut dz = dscores.view().insert_axis(Axis(1)).to_owned();
    for l in (1..params.decoder.len()).rev() {
        let a = &batch.acts[l - 1];
        grads[l].weight += &a.t().dot(&dz);
        grads[l].bias += &dz.sum_axis(Axis(0));
        let mut da = dz.dot(&params.decoder[l].weight.t());
        ndarray::Zip::from(&mut da).and(a).for_each(|d, &v| {
            if v <= 0.0 {
                *d = 0.0;
            }
        });
        dz = da;
    }
    let h1 = dz.ncols();
    let mut d_anchor = Array2::<f64>::zeros((features.nrows(), h1));
    for (row, &a) in dz.axis_iter(Axis(0)).zip(&batch.anchors) {
        let mut t = d_anchor.row_mut(a);
        t += &row;
    }
    let first = &params.decoder[0];
    let w_feat = first.weight.slice(s![3.., ..]);
    grads[0].weight.slice_mut(s![0..3, ..]).scaled_add(1.0, &batch.rel.t().dot(&dz));
    grads[0].weight.slice_mut(s![3.., ..]).scaled_add(1.0, &features.t().dot(&d_anchor));
    grads[0].bias += &dz.sum_axis(Axis(0));
    d_anchor.dot(&w_feat.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::config::{FeatureExtractorConfig, ModelConfig, ScoreDecoderConfig};
    use ndarray::array;

    fn params(hidden: Vec<usize>, layers: Vec<usize>) -> ScoreModelParams {
        let cfg = ModelConfig {
            features: FeatureExtractorConfig { edgeconv_layers: layers, graph_k: 1 },
            decoder: ScoreDecoderConfig { hidden, vertical_skip: false },
        };
        ScoreModelParams::init(&cfg, 7).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_or_bias() {
        let mut p = params(vec![5, 3], vec![2]);
        p = p.zeros_like();
        let anchors = [[0.0; 3], [1.0, 1.0, 1.0]];
        let f = Array2::from_elem((2, 2), 0.7);
        assert_eq!(local_score(&[3.0, -2.0, 9.0], 1, &anchors, f.view(), &p).unwrap(), 0.0);
        p.decoder.last_mut().unwrap().bias[0] = -0.25;
        assert_eq!(local_score(&[3.0, -2.0, 9.0], 0, &anchors, f.view(), &p).unwrap(), -0.25);
        assert!(matches!(local_score(&[0.0; 3], 2, &anchors, f.view(), &p), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn hand_computed_one_hidden_unit() {
        let mut p = params(vec![1], vec![1]);
        // Inputs: (dx, dy, dz, h). Hidden: relu(2dx − dz + 3h + 0.5); output: −1.5·hidden + 0.1.
        p.decoder[0] = DenseParams { weight: array![[2.0], [0.0], [-1.0], [3.0]], bias: array![0.5] };
        p.decoder[1] = DenseParams { weight: array![[-1.5]], bias: array![0.1] };
        let anchors = [[0.0, 0.0, 0.0], [1.0, 2.0, 0.5]];
        let f = array![[0.2], [-0.4]];
        let q = [1.5, 0.0, 0.0];
        // Anchor 0: 3 − 0 + 0.6 + 0.5 = 4.1 → −6.05
        let s0 = local_score(&q, 0, &anchors, f.view(), &p).unwrap();
        assert!((s0 - (-1.5 * 4.1 + 0.1)).abs() < 1e-12);
        // Anchor 1: 1 + 0.5 − 1.2 + 0.5 = 0.8 → −1.1
        let s1 = local_score(&q, 1, &anchors, f.view(), &p).unwrap();
        assert!((s1 - (-1.5 * 0.8 + 0.1)).abs() < 1e-12);
        // Dead unit: output is the bias.
        let s = local_score(&[-5.0, 0.0, 0.0], 0, &anchors, f.view(), &p).unwrap();
        assert!((s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn vertical_skip_subtracts_height_above_anchor() {
        let mut p = params(vec![3], vec![2]).zeros_like();
        p.config.decoder.vertical_skip = true;
        p.decoder.last_mut().unwrap().bias[0] = 0.25;
        let anchors = [[0.0, 0.0, 0.5]];
        let f = Array2::from_elem((1, 2), 0.3);
        let s = local_score(&[4.0, -1.0, 2.0], 0, &anchors, f.view(), &p).unwrap();
        assert_eq!(s, 0.25 - 1.5);
        let batch = decoder_forward(&[(0, [4.0, -1.0, 2.0])], &anchors, f.view(), &p);
        assert_eq!(batch.scores()[0], s);
    }

    #[test]
    fn batch_matches_single() {
        for skip in [false, true] {
            batch_matches_single_with(skip);
        }
    }

    fn batch_matches_single_with(vertical_skip: bool) {
        let mut p = params(vec![16, 8], vec![4, 6]);
        p.config.decoder.vertical_skip = vertical_skip;
        let anchors: Vec<Point> = (0..5).map(|i| [i as f64 * 0.1, -(i as f64) * 0.2, 0.05 * i as f64]).collect();
        let f = Array2::from_shape_fn((5, 10), |(i, c)| ((i * 7 + c * 3) % 11) as f64 / 11.0 - 0.4);
        let pairs: Vec<(usize, Point)> = (0..12).map(|j| (j % 5, [j as f64 * 0.03, 0.1, -0.02 * j as f64])).collect();
        let batch = decoder_forward(&pairs, &anchors, f.view(), &p);
        for (j, (a, q)) in pairs.iter().enumerate() {
            let s = local_score(q, *a, &anchors, f.view(), &p).unwrap();
            assert!((batch.scores()[j] - s).abs() < 1e-12);
        }
    }
}
