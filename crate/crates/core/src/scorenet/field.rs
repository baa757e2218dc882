use ndarray::{s, Array1, Array2, ArrayView2};

use super::features::extract_features;
use super::params::ScoreModelParams;
use crate::error::Result;
use crate::knn::KnnIndex3;
use crate::survey::Point;

/// A set of anchors, each carrying a local score field over query positions.
pub trait LocalScores: Sync {
    /// Spatial index over the anchor positions.
    fn anchor_index(&self) -> &KnnIndex3;

    /// Score of `query` under each listed anchor, written to `out` in order.
    fn local_scores(&self, query: &Point, anchors: &[usize], out: &mut Vec<f64>);
}

/// Trained score fields of one patch, ready for repeated evaluation.
///
/// Features are extracted once at construction; the decoder then runs in
/// single precision with the anchor-dependent part of its first layer folded
/// into one row per anchor.
pub struct ScoreField {
    index: KnnIndex3,
    /// Anchor heights when the decoder subtracts the query's height above the anchor.
    skip_z: Option<Vec<f64>>,
    w_pos: Array2<f32>,
    per_anchor: Array2<f32>,
    layers: Vec<(Array2<f32>, Array1<f32>)>,
}

impl ScoreField {
    pub fn new(anchors: &[Point], params: &ScoreModelParams) -> Result<Self> {
        let feats = extract_features(anchors, params)?;
        Ok(Self::from_features(anchors, feats.view(), params))
    }

    pub fn from_features(anchors: &[Point], features: ArrayView2<f64>, params: &ScoreModelParams) -> Self {
        let first = &params.decoder[0];
        let w_pos = first.weight.slice(s![0..3, ..]);
        let r = Array2::from_shape_fn((anchors.len(), 3), |(i, c)| anchors[i][c]);
        let per_anchor = features.dot(&first.weight.slice(s![3.., ..])) + &first.bias - r.dot(&w_pos);
        Self {
            index: KnnIndex3::new(anchors.to_vec()),
            skip_z: params.config.decoder.vertical_skip.then(|| anchors.iter().map(|p| p[2]).collect()),
            w_pos: w_pos.mapv(|v| v as f32),
            per_anchor: per_anchor.mapv(|v| v as f32),
            layers: params.decoder[1..]
                .iter()
                .map(|l| (l.weight.mapv(|v| v as f32), l.bias.mapv(|v| v as f32)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl LocalScores for ScoreField {
    fn anchor_index(&self) -> &KnnIndex3 {
        &self.index
    }

    fn local_scores(&self, query: &Point, anchors: &[usize], out: &mut Vec<f64>) {
        let h1 = self.w_pos.ncols();
        let q = [query[0] as f32, query[1] as f32, query[2] as f32];
        let qw: Array1<f32> = (0..h1)
            .map(|c| q[0] * self.w_pos[[0, c]] + q[1] * self.w_pos[[1, c]] + q[2] * self.w_pos[[2, c]])
            .collect();
        let mut z = Array2::<f32>::zeros((anchors.len(), h1));
        for (mut row, &a) in z.rows_mut().into_iter().zip(anchors) {
            let c = self.per_anchor.row(a);
            for j in 0..h1 {
                row[j] = (qw[j] + c[j]).max(0.0);
            }
        }
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            z = z.dot(w) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
        }
        out.clear();
        out.extend(z.column(0).iter().map(|&v| v as f64));
        if let Some(zs) = &self.skip_z {
            out.iter_mut().zip(anchors).for_each(|(s, &a)| *s -= query[2] - zs[a]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::config::{FeatureExtractorConfig, ModelConfig, ScoreDecoderConfig};
    use crate::scorenet::decoder::local_score;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_exact_decoder() {
        for skip in [false, true] {
            check_exact(skip);
        }
    }

    fn check_exact(vertical_skip: bool) {
        let cfg = ModelConfig {
            features: FeatureExtractorConfig { edgeconv_layers: vec![8, 8], graph_k: 4 },
            decoder: ScoreDecoderConfig { hidden: vec![16, 8], vertical_skip },
        };
        let params = ScoreModelParams::init(&cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Point> = (0..50).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1)]).collect();
        let feats = extract_features(&pts, &params).unwrap();
        let field = ScoreField::from_features(&pts, feats.view(), &params);
        let anchors: Vec<usize> = (0..50).step_by(3).collect();
        let mut out = Vec::new();
        for _ in 0..20 {
            let q: Point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)];
            field.local_scores(&q, &anchors, &mut out);
            for (&a, &s) in anchors.iter().zip(&out) {
                let exact = local_score(&q, a, &pts, feats.view(), &params).unwrap();
                assert!((s - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "{s} vs {exact}");
            }
        }
    }
}
