//! Run configuration: TOML or JSON files, layered over presets and defaults.
//!
//! Each subcommand resolves a fully populated settings struct: defaults (or a
//! preset) first, then the file's table for that subcommand, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mbes_core::baselines::{BaselineMethod, Interpolation, RadiusRemovalConfig, StatisticalRemovalConfig};
use mbes_core::synth::SurveyConfig;
use mbes_core::{DenoiseConfig, DetectConfig, ModelConfig, Preset, TrainConfig, Variant};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Raw config file; subcommand tables stay untyped until they are overlaid.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub threads: Option<usize>,
    pub generate: Option<Value>,
    pub train: Option<Value>,
    pub detect: Option<Value>,
    pub denoise: Option<Value>,
    pub baseline: Option<Value>,
    pub eval: Option<Value>,
    pub sweep: Option<Value>,
}

impl ConfigFile {
    /// Parse by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Replace leaves of `base` with those of `patch`, recursing into tables.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Apply a file table over `base`; unknown keys are rejected by `T`.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, table: Option<&Value>, section: &str) -> Result<T> {
    let Some(table) = table else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, table);
    serde_json::from_value(value).with_context(|| format!("invalid [{section}] table"))
}

/// Which synthetic split `generate` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSettings {
    pub preset: String,
    pub split: Split,
    pub terrain: mbes_core::synth::TerrainConfig,
    pub sensor: mbes_core::synth::SensorConfig,
    pub noise: mbes_core::synth::NoiseConfig,
}

impl GenerateSettings {
    pub fn from_preset(preset: &Preset, split: Split) -> Self {
        let s = match split {
            Split::Train => preset.train.clone(),
            Split::Test => preset.test.clone(),
        };
        Self { preset: preset.name.clone(), split, terrain: s.terrain, sensor: s.sensor, noise: s.noise }
    }

    pub fn survey(&self) -> SurveyConfig {
        SurveyConfig { terrain: self.terrain.clone(), sensor: self.sensor.clone(), noise: self.noise.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub preset: String,
    pub val_fraction: f64,
    pub model: ModelConfig,
    pub schedule: TrainConfig,
}

impl TrainSettings {
    pub fn from_preset(p: &Preset) -> Self {
        Self { preset: p.name.clone(), val_fraction: p.val_fraction, model: p.model.clone(), schedule: p.training.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSettings {
    pub ensemble_k: usize,
    pub iqr_multiplier: f64,
}

impl Default for DetectSettings {
    fn default() -> Self {
        let d = DetectConfig::default();
        Self { ensemble_k: d.ensemble_k, iqr_multiplier: d.iqr_multiplier }
    }
}

impl DetectSettings {
    pub fn detect(&self) -> DetectConfig {
        DetectConfig { ensemble_k: self.ensemble_k, iqr_multiplier: self.iqr_multiplier }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSettings {
    pub variant: Variant,
    pub ensemble_k: usize,
    pub iqr_multiplier: f64,
    pub alpha0: f64,
    pub gamma: f64,
    pub steps: usize,
}

impl Default for DenoiseSettings {
    fn default() -> Self {
        let d = DenoiseConfig::default();
        Self {
            variant: Variant::Score,
            ensemble_k: d.ensemble_k,
            iqr_multiplier: DetectConfig::default().iqr_multiplier,
            alpha0: d.alpha0,
            gamma: d.gamma,
            steps: d.steps,
        }
    }
}

impl DenoiseSettings {
    pub fn detect(&self) -> DetectConfig {
        DetectConfig { ensemble_k: self.ensemble_k, iqr_multiplier: self.iqr_multiplier }
    }

    pub fn denoise(&self) -> DenoiseConfig {
        DenoiseConfig { ensemble_k: self.ensemble_k, alpha0: self.alpha0, gamma: self.gamma, steps: self.steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Statistical,
    Radius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSettings {
    pub method: MethodName,
    pub interp: Interpolation,
    pub nb_neighbors: usize,
    pub std_ratio: f64,
    pub radius: f64,
    pub min_neighbors: usize,
    /// Nearest inliers per kriging query; 0 uses every inlier of the patch.
    pub kriging_neighbors: usize,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let s = StatisticalRemovalConfig::default();
        let r = RadiusRemovalConfig::default();
        Self {
            method: MethodName::Statistical,
            interp: Interpolation::Mean,
            nb_neighbors: s.nb_neighbors,
            std_ratio: s.std_ratio,
            radius: r.radius,
            min_neighbors: r.min_neighbors,
            kriging_neighbors: mbes_core::baselines::KrigingConfig::default().n_closest.unwrap_or(0),
        }
    }
}

impl BaselineSettings {
    pub fn method(&self) -> BaselineMethod {
        match self.method {
            MethodName::Statistical => BaselineMethod::Statistical(StatisticalRemovalConfig {
                nb_neighbors: self.nb_neighbors,
                std_ratio: self.std_ratio,
            }),
            MethodName::Radius => {
                BaselineMethod::Radius(RadiusRemovalConfig { radius: self.radius, min_neighbors: self.min_neighbors })
            }
        }
    }

    pub fn kriging(&self) -> mbes_core::baselines::KrigingConfig {
        mbes_core::baselines::KrigingConfig { n_closest: (self.kriging_neighbors > 0).then_some(self.kriging_neighbors) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub pings_per_patch: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { pings_per_patch: mbes_core::survey::PINGS_PER_PATCH }
    }
}

/// Baseline grid as the cross product of each method's parameter lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub nb_neighbors: Vec<usize>,
    pub std_ratio: Vec<f64>,
    pub radius: Vec<f64>,
    pub min_neighbors: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let mut s = Self { nb_neighbors: Vec::new(), std_ratio: Vec::new(), radius: Vec::new(), min_neighbors: Vec::new() };
        for m in mbes_core::sweep::default_baseline_grid() {
            match m {
                BaselineMethod::Statistical(c) => {
                    push_unique(&mut s.nb_neighbors, c.nb_neighbors);
                    push_unique(&mut s.std_ratio, c.std_ratio);
                }
                BaselineMethod::Radius(c) => {
                    push_unique(&mut s.radius, c.radius);
                    push_unique(&mut s.min_neighbors, c.min_neighbors);
                }
            }
        }
        s
    }
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

impl SweepSettings {
    pub fn grid(&self) -> Vec<BaselineMethod> {
        let mut grid = Vec::new();
        for &nb_neighbors in &self.nb_neighbors {
            for &std_ratio in &self.std_ratio {
                grid.push(BaselineMethod::Statistical(StatisticalRemovalConfig { nb_neighbors, std_ratio }));
            }
        }
        for &radius in &self.radius {
            for &min_neighbors in &self.min_neighbors {
                grid.push(BaselineMethod::Radius(RadiusRemovalConfig { radius, min_neighbors }));
            }
        }
        grid
    }
}

/// Effective configuration written next to a command's outputs; loadable as a config file.
#[derive(Debug, Serialize)]
pub struct Snapshot<'a, T: Serialize> {
    pub seed: u64,
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub section: std::collections::BTreeMap<&'a str, &'a T>,
}

pub fn write_snapshot<T: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    deterministic: bool,
    threads: Option<usize>,
    settings: &T,
) -> Result<PathBuf> {
    let path = snapshot_path(out);
    let snap = Snapshot { seed, deterministic, threads, section: [(command, settings)].into_iter().collect() };
    let mut text = serde_json::to_string_pretty(&snap)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// `<out>.config.json`, beside the primary output.
pub fn snapshot_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}
