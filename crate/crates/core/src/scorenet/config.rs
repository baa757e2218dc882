use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dynamic-graph EdgeConv stack producing per-point features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureExtractorConfig {
    /// Output width of each EdgeConv layer; outputs are concatenated.
    pub edgeconv_layers: Vec<usize>,
    /// Graph neighbours per point (self excluded).
    pub graph_k: usize,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        Self { edgeconv_layers: vec![32, 64, 128], graph_k: 16 }
    }
}

impl FeatureExtractorConfig {
    pub fn feature_width(&self) -> usize {
        self.edgeconv_layers.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.edgeconv_layers.is_empty() || self.edgeconv_layers.contains(&0) || self.graph_k == 0 {
            return Err(Error::InvalidConfig(
                "feature extractor needs at least one layer, positive widths and graph_k >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// MLP mapping `(query - anchor) ⊕ anchor feature` to a scalar z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreDecoderConfig {
    pub hidden: Vec<usize>,
    /// Subtract the query's height above the anchor from the MLP output, so the
    /// network only models the surface height at the query's XY.
    pub vertical_skip: bool,
}

impl Default for ScoreDecoderConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 64, 32], vertical_skip: false }
    }
}

impl ScoreDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("decoder needs at least one non-empty hidden layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub features: FeatureExtractorConfig,
    pub decoder: ScoreDecoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.decoder.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate on a plateau.
    pub lr_decay: f64,
    /// Evaluations without a new best validation MAE before decaying.
    pub patience: usize,
    pub eval_every: usize,
    /// Ensemble size of the validation denoising pass.
    pub val_ensemble_k: usize,
    /// Supervision queries are drawn from this many nearest raw points of each anchor.
    pub query_k: usize,
    pub queries_per_point: usize,
    /// Extra vertically shifted queries per anchor (0 disables them).
    pub lifted_queries_per_point: usize,
    /// Lifted queries are drawn from this many nearest raw points (at least `query_k`).
    pub lifted_query_k: usize,
    /// Largest shift of a lifted query, normalized z units.
    pub max_lift: f64,
    /// Points kept per patch per step (uniform subsample without replacement).
    pub points_per_patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            total_steps: 10_500,
            lr: 1e-4,
            lr_decay: 0.5,
            patience: 3,
            eval_every: 250,
            val_ensemble_k: 64,
            query_k: 32,
            queries_per_point: 8,
            lifted_queries_per_point: 0,
            lifted_query_k: 32,
            max_lift: 1.0,
            points_per_patch: 2048,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Nearest raw points kept per anchor for query sampling.
    pub fn candidate_width(&self) -> usize {
        if self.lifted_queries_per_point > 0 {
            self.query_k.max(self.lifted_query_k)
        } else {
            self.query_k
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.query_k == 0 || self.queries_per_point == 0 || self.points_per_patch == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, query_k, queries_per_point and points_per_patch must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig("lr must be positive and lr_decay in (0, 1]".into()));
        }
        if !(self.max_lift > 0.0 && self.max_lift.is_finite()) {
            return Err(Error::InvalidConfig("max_lift must be positive".into()));
        }
        if self.eval_every == 0 || self.val_ensemble_k == 0 {
            return Err(Error::InvalidConfig("eval_every and val_ensemble_k must be positive".into()));
        }
        Ok(())
    }
}
