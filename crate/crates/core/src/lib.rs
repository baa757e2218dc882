//! Score-based denoising and outlier detection for multibeam echo-sounder point clouds.

pub mod baselines;
pub mod dataset;
pub mod denoise;
pub mod error;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod norm;
pub mod pipeline;
pub mod scorenet;
pub mod survey;
pub mod sweep;
pub mod synth;

pub use dataset::{prepare_split, Preset, PreparedSplit};
pub use denoise::{DenoiseConfig, DetectConfig, Variant};
pub use error::{Error, Result};
pub use knn::{KnnIndex, KnnIndex2, KnnIndex3, Neighbor};
pub use metrics::{ClassificationReport, DenoiseReport, EvalReport};
pub use norm::NormTransform;
pub use scorenet::{ModelConfig, ScoreModelParams, TrainConfig};
pub use survey::{Patch, Point, Survey};
