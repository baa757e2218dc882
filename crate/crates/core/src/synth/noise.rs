use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::Survey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub inlier_sigma_z: f64,
    pub outlier_fraction: f64,
    /// Range of |Δz| for outliers, meters; magnitudes are log-uniform, sign is random.
    pub outlier_z_magnitude: [f64; 2],
    /// Share of outliers placed in contiguous beam runs within one ping.
    pub cluster_fraction: f64,
    pub cluster_size: [usize; 2],
    /// |Δz| above this marks a sounding as an outlier; inlier noise is truncated here.
    pub inlier_bound: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            inlier_sigma_z: 0.05,
            outlier_fraction: 0.04,
            outlier_z_magnitude: [0.5, 10.0],
            cluster_fraction: 0.5,
            cluster_size: [3, 12],
            inlier_bound: 0.15,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// Outlier share of the test split reported for the reference survey.
    pub const TEST_OUTLIER_FRACTION: f64 = 0.0737;

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("noise: {m}")));
        if !(0.0..=1.0).contains(&self.outlier_fraction) || !(0.0..=1.0).contains(&self.cluster_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.inlier_sigma_z >= 0.0 && self.inlier_bound >= 0.0) {
            return bad("inlier_sigma_z and inlier_bound must be non-negative");
        }
        if self.inlier_sigma_z > 0.0 && self.inlier_bound <= 0.0 {
            return bad("inlier_bound must be positive when inlier noise is enabled");
        }
        let [lo, hi] = self.outlier_z_magnitude;
        if self.outlier_fraction > 0.0 && !(lo > self.inlier_bound && lo <= hi && hi.is_finite()) {
            return bad("outlier magnitudes must exceed inlier_bound and be ordered");
        }
        if self.cluster_size[0] == 0 || self.cluster_size[0] > self.cluster_size[1] {
            return bad("cluster_size must be a positive, ordered range");
        }
        Ok(())
    }

    fn magnitude(&self, rng: &mut impl Rng) -> f64 {
        let [lo, hi] = self.outlier_z_magnitude;
        if hi > lo {
            rng.random_range(lo.ln()..hi.ln()).exp()
        } else {
            lo
        }
    }
}

fn ping_rng(seed: u64, ping: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ping as u64);
    rng
}

/// Add Gaussian inlier noise and heavy-tailed outliers to the clean survey.
///
/// Every ping draws from its own random stream, so the result does not depend
/// on processing order. X and Y are never modified.
pub fn inject_noise(survey: &Survey, cfg: &NoiseConfig) -> Result<Survey> {
    cfg.validate()?;
    survey.validate()?;
    let clean = survey.xyz_clean.clone().unwrap_or_else(|| survey.xyz_raw.clone());
    let beams = survey.beams;
    let normal = Normal::new(0.0, cfg.inlier_sigma_z.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mean_cluster = 0.5 * (cfg.cluster_size[0] + cfg.cluster_size[1]) as f64;
    let clusters_per_ping = cfg.outlier_fraction * cfg.cluster_fraction * beams as f64 / mean_cluster;
    let clustered = cfg.outlier_fraction * cfg.cluster_fraction;
    let isolated_p = if clustered < 1.0 {
        (cfg.outlier_fraction * (1.0 - cfg.cluster_fraction) / (1.0 - clustered)).min(1.0)
    } else {
        0.0
    };

    let mut raw = clean.clone();
    let mut mask = vec![false; survey.len()];
    let mut disp = vec![0.0f64; beams];
    for ping in 0..survey.pings {
        let mut rng = ping_rng(cfg.seed, ping);
        disp.iter_mut().for_each(|d| *d = 0.0);

        if clusters_per_ping > 0.0 {
            let n = Poisson::new(clusters_per_ping)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng) as usize;
            for _ in 0..n {
                let len = rng.random_range(cfg.cluster_size[0]..=cfg.cluster_size[1]).min(beams);
                let start = rng.random_range(0..=beams - len);
                let base = cfg.magnitude(&mut rng);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let [lo, hi] = cfg.outlier_z_magnitude;
                for d in &mut disp[start..start + len] {
                    let m = (base * rng.random_range(-0.3f64..0.3).exp()).clamp(lo, hi);
                    if *d == 0.0 {
                        *d = sign * m;
                    }
                }
            }
        }
        if isolated_p > 0.0 {
            for d in disp.iter_mut() {
                if rng.random_bool(isolated_p) && *d == 0.0 {
                    let m = cfg.magnitude(&mut rng);
                    *d = if rng.random_bool(0.5) { m } else { -m };
                }
            }
        }

        for (beam, &d) in disp.iter().enumerate() {
            let i = ping * beams + beam;
            let mut noise = 0.0;
            if cfg.inlier_sigma_z > 0.0 {
                // Truncated at the inlier bound so noise alone never makes an outlier.
                loop {
                    noise = normal.sample(&mut rng);
                    if noise.abs() <= cfg.inlier_bound {
                        break;
                    }
                }
            }
            let total = noise + d;
            raw[i][2] = clean[i][2] + total;
            mask[i] = total.abs() > cfg.inlier_bound;
        }
    }

    Ok(Survey {
        pings: survey.pings,
        beams,
        xyz_raw: raw,
        xyz_clean: Some(clean),
        outlier_mask: Some(mask),
        meta: survey.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_survey(pings: usize, beams: usize) -> Survey {
        let pts: Vec<_> = (0..pings * beams)
            .map(|i| [(i / beams) as f64 * 0.8, (i % beams) as f64, 90.0])
            .collect();
        let mut s = Survey::new(pings, beams, pts.clone()).unwrap();
        s.xyz_clean = Some(pts);
        s
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = flat_survey(10, 20);
        let cfg = NoiseConfig { inlier_sigma_z: 0.0, outlier_fraction: 0.0, ..Default::default() };
        let out = inject_noise(&s, &cfg).unwrap();
        assert_eq!(out.xyz_raw, s.xyz_raw);
        assert!(out.outlier_mask.unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn deterministic() {
        let s = flat_survey(40, 64);
        let cfg = NoiseConfig { seed: 9, outlier_fraction: 0.07, ..Default::default() };
        let a = inject_noise(&s, &cfg).unwrap();
        let b = inject_noise(&s, &cfg).unwrap();
        assert_eq!(a, b);
        let c = inject_noise(&s, &NoiseConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.xyz_raw, c.xyz_raw);
    }

    #[test]
    fn outlier_fraction_and_label_consistency() {
        let s = flat_survey(300, 400);
        for f in [0.04, NoiseConfig::TEST_OUTLIER_FRACTION] {
            let cfg = NoiseConfig { seed: 1, outlier_fraction: f, ..Default::default() };
            let out = inject_noise(&s, &cfg).unwrap();
            let mask = out.outlier_mask.as_ref().unwrap();
            let frac = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
            assert!((frac - f).abs() <= 0.005, "fraction {frac} vs {f}");
            for ((r, c), &m) in out.xyz_raw.iter().zip(out.xyz_clean.as_ref().unwrap()).zip(mask) {
                let d = (r[2] - c[2]).abs();
                if m {
                    assert!(d > cfg.inlier_bound);
                } else {
                    assert!(d <= cfg.inlier_bound + 6.0 * cfg.inlier_sigma_z);
                }
                assert_eq!((r[0], r[1]), (c[0], c[1]));
            }
        }
    }

    #[test]
    fn expected_count_at_reference_scale() {
        // 7.37% of the 25,518,400 reference test points.
        let expected = NoiseConfig::TEST_OUTLIER_FRACTION * 25_518_400.0;
        assert!((expected - 1_880_800.0).abs() / 1_880_800.0 < 1e-3);
    }

    #[test]
    fn clustered_outliers_form_runs() {
        let s = flat_survey(200, 64);
        let cfg = NoiseConfig { seed: 4, outlier_fraction: 0.1, cluster_fraction: 1.0, ..Default::default() };
        let out = inject_noise(&s, &cfg).unwrap();
        let mask = out.outlier_mask.unwrap();
        let isolated = (0..mask.len())
            .filter(|&i| {
                let b = i % 64;
                mask[i] && (b == 0 || !mask[i - 1]) && (b == 63 || !mask[i + 1])
            })
            .count();
        assert_eq!(isolated, 0);
    }

    #[test]
    fn invalid_configs() {
        assert!(NoiseConfig { outlier_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(NoiseConfig { outlier_z_magnitude: [0.1, 10.0], ..Default::default() }.validate().is_err());
    }
}
