//! Built-in synthetic datasets and patch preparation.

use serde::{Deserialize, Serialize};

use crate::denoise::{DenoiseConfig, DetectConfig};
use crate::error::{Error, Result};
use crate::norm::{compute_z_scale, normalize_patch, NormTransform};
use crate::scorenet::{FeatureExtractorConfig, ModelConfig, ScoreDecoderConfig, TrainConfig};
use crate::survey::{build_patches, Patch, Survey, PINGS_PER_PATCH};
use crate::synth::{NoiseConfig, SensorConfig, SurveyConfig, TerrainConfig, Track};

/// A reproducible experiment: train/test surveys plus model and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub train: SurveyConfig,
    pub test: SurveyConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    /// Share of training patches held out for validation.
    pub val_fraction: f64,
    pub detect: DetectConfig,
    pub denoise: DenoiseConfig,
}

/// Terrain and sensor settings for a straight line of `pings` pings.
fn line_survey(pings: usize, beams: usize, feature_density: f64, outlier_fraction: f64) -> SurveyConfig {
    let sensor = SensorConfig { beams, pings, ..Default::default() };
    let length = sensor.track.start[0] * 2.0 + sensor.ping_spacing * pings as f64;
    let area_scale = length / 1000.0;
    let base = TerrainConfig::default();
    SurveyConfig {
        terrain: TerrainConfig {
            extent: [length.ceil(), base.extent[1]],
            num_bumps: (base.num_bumps as f64 * area_scale * feature_density).round() as usize,
            groove_count: (base.groove_count as f64 * area_scale * feature_density).round() as usize,
            bump_amplitude: [-2.5, 2.5],
            ..base
        },
        sensor: SensorConfig { track: Track::default(), ..sensor },
        noise: NoiseConfig { outlier_fraction, ..Default::default() },
    }
}

impl Preset {
    /// 64 beams × 32 pings per patch, 300 training and 60 test patches, 7% outliers.
    pub fn desk() -> Self {
        let patches = |n: usize| n * PINGS_PER_PATCH;
        Preset {
            name: "desk".into(),
            train: line_survey(patches(300), 64, 1.0, 0.07),
            test: line_survey(patches(60), 64, 1.0, 0.07),
            model: ModelConfig {
                features: FeatureExtractorConfig { edgeconv_layers: vec![32, 64, 128], graph_k: 16 },
                decoder: ScoreDecoderConfig { hidden: vec![64, 32], vertical_skip: true },
            },
            training: TrainConfig {
                batch_size: 4,
                total_steps: 750,
                lr: 1e-3,
                lr_decay: 0.5,
                patience: 3,
                eval_every: 250,
                val_ensemble_k: 64,
                query_k: 32,
                queries_per_point: 8,
                lifted_queries_per_point: 4,
                lifted_query_k: 32,
                max_lift: 1.0,
                points_per_patch: 2048,
                seed: 0,
            },
            val_fraction: 0.05,
            detect: DetectConfig::default(),
            denoise: DenoiseConfig::default(),
        }
        .with_seed(0)
    }

    /// Seconds-scale preset for smoke tests of the whole pipeline.
    pub fn tiny() -> Self {
        let patches = |n: usize| n * PINGS_PER_PATCH;
        Preset {
            name: "tiny".into(),
            train: line_survey(patches(6), 16, 1.0, 0.07),
            test: line_survey(patches(2), 16, 1.0, 0.07),
            model: ModelConfig {
                features: FeatureExtractorConfig { edgeconv_layers: vec![8, 8], graph_k: 8 },
                decoder: ScoreDecoderConfig { hidden: vec![16], vertical_skip: true },
            },
            training: TrainConfig {
                batch_size: 2,
                total_steps: 20,
                lr: 1e-3,
                eval_every: 10,
                val_ensemble_k: 16,
                query_k: 8,
                queries_per_point: 2,
                points_per_patch: 512,
                ..Default::default()
            },
            val_fraction: 0.2,
            detect: DetectConfig { ensemble_k: 16, iqr_multiplier: 5.0 },
            denoise: DenoiseConfig { ensemble_k: 16, steps: 5, ..Default::default() },
        }
        .with_seed(0)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            _ => Err(Error::InvalidConfig(format!("unknown preset {name:?} (expected desk or tiny)"))),
        }
    }

    /// Derive every seed from one master seed; train and test never share terrain or noise.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train = self.train.with_seed(seed.wrapping_mul(2));
        self.test = self.test.with_seed(seed.wrapping_mul(2).wrapping_add(1));
        self.training.seed = seed;
        self
    }
}

/// Patches of one split in both frames.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub raw: Vec<Patch>,
    pub normalized: Vec<Patch>,
    pub transforms: Vec<NormTransform>,
    pub z_scale: f64,
}

/// Cut a survey into patches and normalize them; `z_scale` defaults to the split's own.
pub fn prepare_split(survey: &Survey, z_scale: Option<f64>) -> Result<PreparedSplit> {
    let raw = build_patches(survey, PINGS_PER_PATCH)?;
    let z_scale = match z_scale {
        Some(z) => z,
        None => compute_z_scale(&raw)?,
    };
    let (normalized, transforms) = raw.iter().map(|p| normalize_patch(p, z_scale)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(PreparedSplit { raw, normalized, transforms, z_scale })
}

/// Hold out the last `fraction` of patches (at least one when there are two or more).
pub fn split_train_val(patches: &[Patch], fraction: f64) -> (Vec<Patch>, Vec<Patch>) {
    let n = patches.len();
    let mut val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        val = val.clamp(1, n - 1);
    }
    let val = val.min(n);
    (patches[..n - val].to_vec(), patches[n - val..].to_vec())
}
