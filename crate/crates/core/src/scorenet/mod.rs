//! The learnable score field: EdgeConv features, local score decoder,
//! supervision and training.

mod checkpoint;
mod config;
mod decoder;
mod features;
mod field;
mod graph;
mod loss;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, round_to_f32, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{FeatureExtractorConfig, ModelConfig, ScoreDecoderConfig, TrainConfig};
pub use decoder::{decoder_backward, decoder_forward, local_score, DecoderBatch};
pub use features::{backward_features, extract_features, forward_features, FeatureCache, LEAKY_SLOPE};
pub use field::{LocalScores, ScoreField};
pub use graph::{knn_graph, knn_graph_features, KnnGraph};
pub use loss::{anchor_losses, gt_score, loss_and_grad, patch_loss, sample_lifted_queries, sample_queries, LossTargets, QuerySample};
pub use params::{DenseParams, EdgeConvParams, ScoreModelParams, TrainingMeta};
pub use train::{train, validation_mae, Adam, EvalRecord, TrainOutcome};
