use std::f64::consts::PI;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{loss_and_grad, sample_lifted_queries, sample_queries, LossTargets};
use super::params::ScoreModelParams;
use crate::denoise::{denoise_iterative, DenoiseConfig};
use crate::error::{Error, Result};
use crate::norm::rotate_patch_z;
use crate::survey::Patch;

/// Adam with the usual defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(num_params: usize) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub lr: f64,
    /// Mean batch loss since the previous evaluation.
    pub train_loss: f64,
    pub val_mae_z: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint by validation MAE_z (the last one if there is no validation set).
    pub params: ScoreModelParams,
    pub history: Vec<EvalRecord>,
    pub losses: Vec<f64>,
}

/// MAE_z in meters after one score-only denoising pass over normalized patches.
pub fn validation_mae(patches: &[Patch], params: &ScoreModelParams, ensemble_k: usize, z_scale: f64) -> Result<f64> {
    let cfg = DenoiseConfig { ensemble_k, ..Default::default() };
    let mut total = 0.0;
    for patch in patches {
        let clean = patch.clean_xyz.as_ref().ok_or(Error::EmptyPoints("validation clean reference"))?;
        let out = denoise_iterative(patch, params, &cfg)?;
        let mae = out.xyz.iter().zip(clean).map(|(a, b)| (a[2] - b[2]).abs()).sum::<f64>() / out.len() as f64;
        total += mae * z_scale;
    }
    Ok(total / patches.len() as f64)
}

fn subsample(patch: &Patch, m: usize, rng: &mut impl Rng) -> Patch {
    if m >= patch.len() {
        return patch.clone();
    }
    let mut idx = rand::seq::index::sample(rng, patch.len(), m).into_vec();
    idx.sort_unstable();
    let pick = |v: &Vec<[f64; 3]>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Patch {
        xyz: pick(&patch.xyz),
        clean_xyz: patch.clean_xyz.as_ref().map(pick),
        labels: patch.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        ..patch.clone()
    }
}

struct SlotResult {
    loss: f64,
    grads: Vec<f64>,
}

/// Fit the score network on normalized, labelled patches.
///
/// Every random draw comes from streams derived from `cfg.seed`, and gradients
/// are summed in batch order, so the result does not depend on thread count.
pub fn train(
    train_patches: &[Patch],
    val_patches: &[Patch],
    init: ScoreModelParams,
    cfg: &TrainConfig,
    z_scale: f64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    let mut params = init;
    params.meta.z_scale = Some(z_scale);
    if cfg.total_steps == 0 {
        return Ok(TrainOutcome { params, history: Vec::new(), losses: Vec::new() });
    }
    if train_patches.is_empty() {
        return Err(Error::EmptyPoints("training patches"));
    }
    if let Some(p) = train_patches.iter().find(|p| p.len() < cfg.points_per_patch) {
        return Err(Error::InvalidConfig(format!(
            "points_per_patch {} exceeds the {} points of patch {}",
            cfg.points_per_patch,
            p.len(),
            p.patch_id
        )));
    }
    // Neighbourhoods and targets are invariant under yaw, so full patches reuse them.
    let cached: Vec<Option<LossTargets>> = train_patches
        .iter()
        .map(|p| if cfg.points_per_patch >= p.len() { LossTargets::with_width(p, cfg.query_k, cfg.candidate_width()).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut adam = Adam::new(params.num_parameters());
    let mut flat = params.flatten();
    let mut lr = cfg.lr;
    let mut best: Option<(f64, ScoreModelParams)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut losses = Vec::with_capacity(cfg.total_steps);
    let mut since_eval = Vec::new();

    for step in 0..cfg.total_steps {
        let picks: Vec<usize> = (0..cfg.batch_size)
            .map(|_| {
                if order.is_empty() {
                    order = (0..train_patches.len()).collect();
                    order.shuffle(&mut order_rng);
                }
                order.pop().unwrap()
            })
            .collect();
        let results: Vec<Result<Option<SlotResult>>> = picks
            .par_iter()
            .enumerate()
            .map(|(slot, &pi)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((step * cfg.batch_size + slot) as u64 + 1);
                let source = &train_patches[pi];
                let angle = rng.random_range(0.0..PI);
                let sub = subsample(source, cfg.points_per_patch, &mut rng);
                let targets = match &cached[pi] {
                    Some(t) => t.clone(),
                    None => LossTargets::with_width(&sub, cfg.query_k, cfg.candidate_width())?,
                };
                let rotated = rotate_patch_z(&sub, angle);
                let labels = rotated.labels.as_ref().ok_or(Error::EmptyPoints("training labels"))?;
                let drawn = sample_queries(labels, &targets, cfg.queries_per_point, &mut rng).and_then(|mut s| {
                    if cfg.lifted_queries_per_point > 0 {
                        let m = cfg.lifted_queries_per_point;
                        s.extend(sample_lifted_queries(labels, &targets, m, cfg.max_lift, &mut rng)?);
                    }
                    Ok(s)
                });
                let samples = match drawn {
                    Ok(s) => s,
                    Err(Error::NoInliers) => {
                        warn!("step {step}: patch {} has no inliers, skipped", source.patch_id);
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                };
                let (loss, grads) = loss_and_grad(&rotated, &targets, &samples, &params)?;
                Ok(Some(SlotResult { loss, grads: grads.flatten() }))
            })
            .collect();
        let mut used = 0usize;
        let mut loss = 0.0;
        let mut grad = vec![0.0; flat.len()];
        for r in results {
            if let Some(r) = r? {
                used += 1;
                loss += r.loss;
                grad.iter_mut().zip(&r.grads).for_each(|(g, v)| *g += v);
            }
        }
        if used == 0 {
            continue;
        }
        loss /= used as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        grad.iter_mut().for_each(|g| *g /= used as f64);
        adam.step(&mut flat, &grad, lr);
        params.unflatten(&flat)?;
        losses.push(loss);
        since_eval.push(loss);

        let done = step + 1;
        if !val_patches.is_empty() && (done % cfg.eval_every == 0 || done == cfg.total_steps) {
            let mae = validation_mae(val_patches, &params, cfg.val_ensemble_k, z_scale)?;
            let train_loss = since_eval.iter().sum::<f64>() / since_eval.len().max(1) as f64;
            since_eval.clear();
            info!("step {done}: loss {train_loss:.6e}, val MAE_z {mae:.5} m, lr {lr:.2e}");
            history.push(EvalRecord { step: done, lr, train_loss, val_mae_z: mae });
            if best.as_ref().is_none_or(|(b, _)| mae < *b) {
                let mut snapshot = params.clone();
                snapshot.meta.step = done;
                snapshot.meta.metrics.insert("val_mae_z".into(), mae);
                best = Some((mae, snapshot));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    lr *= cfg.lr_decay;
                    stale = 0;
                    info!("validation plateau; lr now {lr:.2e}");
                }
            }
        }
    }

    let params = match best {
        Some((_, p)) => p,
        None => {
            params.meta.step = cfg.total_steps;
            params
        }
    };
    Ok(TrainOutcome { params, history, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::config::{FeatureExtractorConfig, ModelConfig, ScoreDecoderConfig};

    fn flat_patches(count: usize, seed: u64) -> Vec<Patch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|id| {
                let (pings, beams) = (8, 12);
                let clean: Vec<[f64; 3]> = (0..pings * beams)
                    .map(|i| {
                        let x = (i / beams) as f64 / pings as f64 - 0.5;
                        let y = (i % beams) as f64 / beams as f64 - 0.5;
                        [x, y, 0.0]
                    })
                    .collect();
                let mut labels = vec![false; clean.len()];
                let xyz = clean
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let d = if rng.random_bool(0.05) {
                            labels[i] = true;
                            if rng.random_bool(0.5) { 0.4 } else { -0.4 }
                        } else {
                            rng.random_range(-0.05..0.05)
                        };
                        [c[0], c[1], c[2] + d]
                    })
                    .collect();
                Patch { pings, beams, xyz, labels: Some(labels), clean_xyz: Some(clean), patch_id: id, ping_offset: 0 }
            })
            .collect()
    }

    fn small_model() -> ScoreModelParams {
        let cfg = ModelConfig {
            features: FeatureExtractorConfig { edgeconv_layers: vec![8, 8], graph_k: 8 },
            decoder: ScoreDecoderConfig { hidden: vec![16, 8], vertical_skip: false },
        };
        ScoreModelParams::init(&cfg, 1).unwrap()
    }

    #[test]
    fn zero_steps_returns_init() {
        let init = small_model();
        let cfg = TrainConfig { total_steps: 0, ..Default::default() };
        let out = train(&[], &[], init.clone(), &cfg, 1.0).unwrap();
        assert_eq!(out.params.edge_convs, init.edge_convs);
        assert_eq!(out.params.decoder, init.decoder);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn smoke_training_reduces_loss_and_is_deterministic() {
        let patches = flat_patches(50, 3);
        let cfg = TrainConfig {
            batch_size: 2,
            total_steps: 500,
            lr: 3e-3,
            eval_every: 1000,
            query_k: 8,
            queries_per_point: 4,
            points_per_patch: 96,
            ..Default::default()
        };
        let a = train(&patches, &[], small_model(), &cfg, 1.0).unwrap();
        let head: f64 = a.losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = a.losses[a.losses.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < 0.5 * head, "loss {head} -> {tail}");
        let b = train(&patches, &[], small_model(), &TrainConfig { total_steps: 50, ..cfg.clone() }, 1.0).unwrap();
        let c = train(&patches, &[], small_model(), &TrainConfig { total_steps: 50, ..cfg }, 1.0).unwrap();
        assert_eq!(b.params.flatten(), c.params.flatten());
    }

    #[test]
    fn subsample_rejects_oversized_m() {
        let patches = flat_patches(2, 0);
        let cfg = TrainConfig { total_steps: 1, points_per_patch: 97, ..Default::default() };
        assert!(train(&patches, &[], small_model(), &cfg, 1.0).is_err());
    }
}
