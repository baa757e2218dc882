use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// One EdgeConv layer: `u_ij = h_i·w_center + (h_j − h_i)·w_edge + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConvParams {
    pub w_center: Array2<f64>,
    pub w_edge: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected layer, `y = x·weight + bias` with `weight: [in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMeta {
    pub step: usize,
    pub z_scale: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

/// All learnable tensors of the score network plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModelParams {
    pub config: ModelConfig,
    pub edge_convs: Vec<EdgeConvParams>,
    /// Decoder layers; the first takes `3 + F` inputs, the last has one output.
    pub decoder: Vec<DenseParams>,
    pub meta: TrainingMeta,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl ScoreModelParams {
    /// He-uniform initialisation, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edge_convs = Vec::new();
        let mut c_in = 3;
        for &c_out in &config.features.edgeconv_layers {
            let bound = (6.0 / (2 * c_in) as f64).sqrt();
            edge_convs.push(EdgeConvParams {
                w_center: uniform(&mut rng, c_in, c_out, bound),
                w_edge: uniform(&mut rng, c_in, c_out, bound),
                bias: Array1::zeros(c_out),
            });
            c_in = c_out;
        }
        let mut decoder = Vec::new();
        let mut width = 3 + config.features.feature_width();
        for &h in config.decoder.hidden.iter().chain(std::iter::once(&1)) {
            let bound = (6.0 / width as f64).sqrt();
            decoder.push(DenseParams { weight: uniform(&mut rng, width, h, bound), bias: Array1::zeros(h) });
            width = h;
        }
        Ok(Self { config: config.clone(), edge_convs, decoder, meta: TrainingMeta::default() })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|v| *v = 0.0));
        z.meta = TrainingMeta::default();
        z
    }

    pub fn feature_width(&self) -> usize {
        self.config.features.feature_width()
    }

    /// Visit every tensor in a fixed order with its canonical name.
    pub fn for_each_tensor(&self, mut f: impl FnMut(String, &[f64], &[usize])) {
        for (l, p) in self.edge_convs.iter().enumerate() {
            f(format!("edgeconv.{l}.w_center"), p.w_center.as_slice().unwrap(), p.w_center.shape());
            f(format!("edgeconv.{l}.w_edge"), p.w_edge.as_slice().unwrap(), p.w_edge.shape());
            f(format!("edgeconv.{l}.bias"), p.bias.as_slice().unwrap(), p.bias.shape());
        }
        for (l, p) in self.decoder.iter().enumerate() {
            f(format!("decoder.{l}.weight"), p.weight.as_slice().unwrap(), p.weight.shape());
            f(format!("decoder.{l}.bias"), p.bias.as_slice().unwrap(), p.bias.shape());
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for (l, p) in self.edge_convs.iter_mut().enumerate() {
            f(format!("edgeconv.{l}.w_center"), p.w_center.as_slice_mut().unwrap());
            f(format!("edgeconv.{l}.w_edge"), p.w_edge.as_slice_mut().unwrap());
            f(format!("edgeconv.{l}.bias"), p.bias.as_slice_mut().unwrap());
        }
        for (l, p) in self.decoder.iter_mut().enumerate() {
            f(format!("decoder.{l}.weight"), p.weight.as_slice_mut().unwrap());
            f(format!("decoder.{l}.bias"), p.bias.as_slice_mut().unwrap());
        }
    }

    /// All parameters as one flat vector, in `for_each_tensor` order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_tensor(|_, t, _| out.extend_from_slice(t));
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = {
            let mut n = 0;
            self.for_each_tensor(|_, t, _| n += t.len());
            n
        };
        if flat.len() != total {
            return Err(Error::ShapeMismatch(format!("{} values for {total} parameters", flat.len())));
        }
        let mut off = 0;
        self.for_each_tensor_mut(|_, t| {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        });
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, t, _| n += t.len());
        n
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.flatten();
        let mut off = 0;
        self.for_each_tensor_mut(|_, t| {
            for v in t.iter_mut() {
                *v += scale * src[off];
                off += 1;
            }
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, t, _| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    /// Check tensor shapes against the architecture.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let bad = |m: String| Err(Error::ShapeMismatch(m));
        if self.edge_convs.len() != self.config.features.edgeconv_layers.len() {
            return bad("edgeconv layer count".into());
        }
        let mut c_in = 3;
        for (l, (p, &c_out)) in self.edge_convs.iter().zip(&self.config.features.edgeconv_layers).enumerate() {
            if p.w_center.dim() != (c_in, c_out) || p.w_edge.dim() != (c_in, c_out) || p.bias.len() != c_out {
                return bad(format!("edgeconv.{l}"));
            }
            c_in = c_out;
        }
        let widths: Vec<usize> = std::iter::once(3 + self.feature_width())
            .chain(self.config.decoder.hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        if self.decoder.len() != widths.len() - 1 {
            return bad("decoder layer count".into());
        }
        for (l, p) in self.decoder.iter().enumerate() {
            if p.weight.dim() != (widths[l], widths[l + 1]) || p.bias.len() != widths[l + 1] {
                return bad(format!("decoder.{l}"));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }
}
