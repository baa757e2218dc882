//! Ground-truthed synthetic multibeam surveys.

mod noise;
mod sensor;
mod terrain;

pub use noise::{inject_noise, NoiseConfig};
pub use sensor::{simulate_survey, SensorConfig, Track};
pub use terrain::{gen_terrain, Bump, Groove, HeightField, TerrainConfig};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::survey::Survey;

/// Everything needed to reproduce one synthetic survey.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub terrain: TerrainConfig,
    pub sensor: SensorConfig,
    pub noise: NoiseConfig,
}

impl SurveyConfig {
    /// Set every random seed from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.terrain.seed = seed;
        self.noise.seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        self
    }
}

/// FNV-1a over the canonical JSON form.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Terrain, sensor pass and noise injection in one go.
pub fn generate_survey(cfg: &SurveyConfig) -> Result<Survey> {
    let terrain = gen_terrain(&cfg.terrain)?;
    let clean = simulate_survey(&terrain, &cfg.sensor)?;
    let mut survey = inject_noise(&clean, &cfg.noise)?;
    survey.meta.insert("terrain_seed".into(), Value::from(cfg.terrain.seed));
    survey.meta.insert("noise_seed".into(), Value::from(cfg.noise.seed));
    survey.meta.insert("sensor_hash".into(), Value::from(config_hash(&cfg.sensor)));
    survey.meta.insert("config_hash".into(), Value::from(config_hash(cfg)));
    Ok(survey)
}
