//! Property tests for invariants that span modules.

use mbes_core::denoise::{denoise_with_field, ensemble_score, mean_interpolate};
use mbes_core::knn::{dist2, nn_xy};
use mbes_core::metrics::chamfer;
use mbes_core::norm::{denormalize_patch, normalize_patch, rotate_patch_z};
use mbes_core::scorenet::{patch_loss, FeatureExtractorConfig, LocalScores, ScoreDecoderConfig};
use mbes_core::synth::{inject_noise, NoiseConfig};
use mbes_core::{DenoiseConfig, KnnIndex2, KnnIndex3, ModelConfig, Patch, Point, ScoreModelParams, Survey};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point() -> impl Strategy<Value = Point> {
    (-500.0f64..500.0, -500.0f64..500.0, -120.0f64..-20.0).prop_map(|(x, y, z)| [x, y, z])
}

fn patch_of(xyz: Vec<Point>) -> Patch {
    let n = xyz.len();
    Patch { pings: 1, beams: n, xyz, labels: None, clean_xyz: None, patch_id: 0, ping_offset: 0 }
}

/// Each anchor returns one fixed score wherever it is queried.
struct Constant {
    index: KnnIndex3,
    scores: Vec<f64>,
}

impl LocalScores for Constant {
    fn anchor_index(&self) -> &KnnIndex3 {
        &self.index
    }

    fn local_scores(&self, _query: &Point, anchors: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend(anchors.iter().map(|&a| self.scores[a]));
    }
}

/// Exact vertical offset to a flat surface at height `level`.
struct Flat {
    index: KnnIndex3,
    level: f64,
}

impl LocalScores for Flat {
    fn anchor_index(&self) -> &KnnIndex3 {
        &self.index
    }

    fn local_scores(&self, query: &Point, anchors: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.resize(anchors.len(), self.level - query[2]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_roundtrip_and_unit_disk(xyz in vec(point(), 1..200), z_scale in 0.5f64..50.0) {
        let patch = patch_of(xyz);
        let (n, t) = normalize_patch(&patch, z_scale).unwrap();
        for p in &n.xyz {
            prop_assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= 1.0 + 1e-9);
        }
        let back = denormalize_patch(&n, &t);
        for (a, b) in back.xyz.iter().zip(&patch.xyz) {
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rotation_inverts(xyz in vec(point(), 1..100), angle in -7.0f64..7.0) {
        let patch = patch_of(xyz);
        let back = rotate_patch_z(&rotate_patch_z(&patch, angle), -angle);
        for (a, b) in back.xyz.iter().zip(&patch.xyz) {
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() <= 1e-9 * (1.0 + b[c].abs()));
            }
        }
    }

    #[test]
    fn knn_matches_brute_force(
        pts in vec((0u8..20, 0u8..20, 0u8..4), 1..150),
        q in (0u8..20, 0u8..20, 0u8..4),
        k in 1usize..40,
    ) {
        // A coarse integer lattice forces many distance ties.
        let pts: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x as f64, y as f64, z as f64]).collect();
        let q = [q.0 as f64, q.1 as f64, q.2 as f64];
        let got: Vec<usize> = KnnIndex3::new(pts.clone()).knn(&q, k).iter().map(|n| n.index).collect();
        let mut want: Vec<usize> = (0..pts.len()).collect();
        want.sort_by(|&a, &b| dist2(&pts[a], &q).total_cmp(&dist2(&pts[b], &q)).then(a.cmp(&b)));
        want.truncate(k);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn nn_xy_matches_brute_force(pts in vec(point(), 1..300), q in point()) {
        let idx = KnnIndex2::from_xy(&pts);
        let got = nn_xy(&q, &idx).unwrap();
        let d = |i: usize| (pts[i][0] - q[0]).powi(2) + (pts[i][1] - q[1]).powi(2);
        let want = (0..pts.len()).min_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b))).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn ensemble_median_resists_corruption(
        pts in vec(point(), 9..60),
        scores in vec(-1.0f64..1.0, 60),
        corrupt_seed in any::<u64>(),
    ) {
        let n = pts.len();
        let k = n;
        let mut scores = scores[..n].to_vec();
        let clean_min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let clean_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Corrupt up to floor((k - 1) / 2) anchors.
        let bad = (k - 1) / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(corrupt_seed);
        let picks = rand::seq::index::sample(&mut rng, n, bad);
        for i in picks.iter() {
            scores[i] = if i % 2 == 0 { 1e6 } else { -1e6 };
        }
        let kept: Vec<f64> = (0..n).filter(|i| !picks.iter().any(|p| p == *i)).map(|i| scores[i]).collect();
        let field = Constant { index: KnnIndex3::new(pts.clone()), scores };
        let s = ensemble_score(&field, &pts, k);
        let lo = kept.iter().copied().fold(f64::INFINITY, f64::min).min(clean_min);
        let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(clean_max);
        for v in s {
            prop_assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn ensemble_ignores_anchor_order(pts in vec(point(), 5..60), seed in any::<u64>()) {
        let n = pts.len();
        let scores: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let a = Constant { index: KnnIndex3::new(pts.clone()), scores: scores.clone() };
        let b = Constant {
            index: KnnIndex3::new(order.iter().map(|&i| pts[i]).collect()),
            scores: order.iter().map(|&i| scores[i]).collect(),
        };
        prop_assert_eq!(ensemble_score(&a, &pts, n), ensemble_score(&b, &pts, n));
    }

    #[test]
    fn denoising_keeps_xy_bitwise(xyz in vec(point(), 4..80), level in -100.0f64..-30.0, k in 1usize..8) {
        let patch = patch_of(xyz);
        let field = Flat { index: KnnIndex3::new(patch.xyz.clone()), level };
        let cfg = DenoiseConfig { ensemble_k: k, ..DenoiseConfig::default() };
        let out = denoise_with_field(&patch, &field, &cfg).unwrap();
        for (a, b) in out.xyz.iter().zip(&patch.xyz) {
            prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
            prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn mean_fill_stays_within_inlier_range(xyz in vec(point(), 2..100), mask in vec(any::<bool>(), 100), k in 1usize..10) {
        let n = xyz.len();
        let mut mask = mask[..n].to_vec();
        mask[0] = false;
        let patch = patch_of(xyz);
        let out = mean_interpolate(&patch, &mask, k).unwrap();
        let inl: Vec<f64> = patch.xyz.iter().zip(&mask).filter(|(_, &m)| !m).map(|(p, _)| p[2]).collect();
        let lo = inl.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = inl.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (p, &m) in out.xyz.iter().zip(&mask) {
            if m {
                prop_assert!(p[2] >= lo - 1e-9 && p[2] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn chamfer_symmetric_and_zero_on_self(a in vec(point(), 1..60), b in vec(point(), 1..60)) {
        let ab = chamfer(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - chamfer(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + ab));
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn noise_labels_follow_the_bound(seed in any::<u64>(), fraction in 0.0f64..0.3) {
        let (pings, beams) = (8, 32);
        let clean: Vec<Point> = (0..pings * beams).map(|i| [(i / beams) as f64, (i % beams) as f64, -50.0]).collect();
        let survey = Survey::new(pings, beams, clean.clone()).unwrap();
        let cfg = NoiseConfig { outlier_fraction: fraction, seed, ..NoiseConfig::default() };
        let noisy = inject_noise(&survey, &cfg).unwrap();
        let mask = noisy.outlier_mask.as_ref().unwrap();
        for ((r, c), &m) in noisy.xyz_raw.iter().zip(&clean).zip(mask) {
            prop_assert_eq!(r[0].to_bits(), c[0].to_bits());
            prop_assert_eq!(r[1].to_bits(), c[1].to_bits());
            prop_assert_eq!((r[2] - c[2]).abs() > cfg.inlier_bound, m);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>(), skip in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean: Vec<Point> = (0..24).map(|i| [(i % 6) as f64 * 0.2, (i / 6) as f64 * 0.2, 0.05 * (i % 5) as f64]).collect();
        let labels: Vec<bool> = (0..24).map(|i| i % 7 == 3).collect();
        let xyz = clean.iter().zip(&labels).map(|(c, &o)| [c[0], c[1], c[2] + if o { 0.4 } else { 0.01 }]).collect();
        let patch = Patch { pings: 4, beams: 6, xyz, labels: Some(labels), clean_xyz: Some(clean), patch_id: 0, ping_offset: 0 };
        let cfg = ModelConfig {
            features: FeatureExtractorConfig { edgeconv_layers: vec![4, 4], graph_k: 4 },
            decoder: ScoreDecoderConfig { hidden: vec![6], vertical_skip: skip },
        };
        let params = ScoreModelParams::init(&cfg, seed).unwrap();
        let loss = patch_loss(&patch, &params, 6, 3, &mut rng).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
    }
}
