//! Split XY / Z normalization of patches and yaw augmentation.
//!
//! XY is centred on the patch centroid and scaled into the unit disk per patch.
//! Z is demeaned per patch and divided by a dataset-wide scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{Patch, Point};

/// Inverse data for one normalized patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTransform {
    pub xy_center: [f64; 2],
    pub xy_scale: f64,
    pub z_mean: f64,
    pub z_scale: f64,
}

impl NormTransform {
    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        [
            (p[0] - self.xy_center[0]) / self.xy_scale,
            (p[1] - self.xy_center[1]) / self.xy_scale,
            (p[2] - self.z_mean) / self.z_scale,
        ]
    }

    #[inline]
    pub fn invert(&self, p: &Point) -> Point {
        [
            p[0] * self.xy_scale + self.xy_center[0],
            p[1] * self.xy_scale + self.xy_center[1],
            p[2] * self.z_scale + self.z_mean,
        ]
    }

    /// Convert a z displacement in normalized units to meters.
    #[inline]
    pub fn dz_to_meters(&self, dz: f64) -> f64 {
        dz * self.z_scale
    }
}

fn mean_z(points: &[Point]) -> f64 {
    points.iter().map(|p| p[2]).sum::<f64>() / points.len() as f64
}

/// Largest demeaned |z| over all patches; 1.0 if every patch is flat.
pub fn compute_z_scale(patches: &[Patch]) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::EmptyPoints("patch list"));
    }
    let mut scale = 0.0f64;
    for patch in patches.iter().filter(|p| !p.is_empty()) {
        let m = mean_z(&patch.xyz);
        for p in &patch.xyz {
            scale = scale.max((p[2] - m).abs());
        }
    }
    if !scale.is_finite() {
        return Err(Error::NonFinite("z values".into()));
    }
    Ok(if scale > 0.0 { scale } else { 1.0 })
}

/// Normalize a patch (and its clean counterpart) into the unit-disk frame.
pub fn normalize_patch(patch: &Patch, z_scale: f64) -> Result<(Patch, NormTransform)> {
    if patch.is_empty() {
        return Err(Error::EmptyPoints("patch"));
    }
    if !(z_scale > 0.0 && z_scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("z_scale must be positive, got {z_scale}")));
    }
    let n = patch.len() as f64;
    let cx = patch.xyz.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = patch.xyz.iter().map(|p| p[1]).sum::<f64>() / n;
    let radius = patch
        .xyz
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let t = NormTransform {
        xy_center: [cx, cy],
        xy_scale: if radius > 0.0 { radius } else { 1.0 },
        z_mean: mean_z(&patch.xyz),
        z_scale,
    };
    Ok((apply_transform(patch, &t), t))
}

fn map_points(patch: &Patch, f: impl Fn(&Point) -> Point) -> Patch {
    Patch {
        xyz: patch.xyz.iter().map(&f).collect(),
        clean_xyz: patch.clean_xyz.as_ref().map(|c| c.iter().map(&f).collect()),
        ..patch.clone()
    }
}

/// Apply an existing transform (e.g. to a clean reference of the same patch).
pub fn apply_transform(patch: &Patch, t: &NormTransform) -> Patch {
    map_points(patch, |p| t.apply(p))
}

pub fn denormalize_patch(patch: &Patch, t: &NormTransform) -> Patch {
    map_points(patch, |p| t.invert(p))
}

/// Rotate XY about the origin by `angle` radians; z and labels are untouched.
pub fn rotate_patch_z(patch: &Patch, angle: f64) -> Patch {
    let (s, c) = angle.sin_cos();
    map_points(patch, |p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch(xyz: Vec<Point>) -> Patch {
        Patch {
            pings: 1,
            beams: xyz.len(),
            clean_xyz: Some(xyz.iter().map(|p| [p[0], p[1], p[2] + 0.5]).collect()),
            labels: Some(vec![false; xyz.len()]),
            xyz,
            patch_id: 0,
            ping_offset: 0,
        }
    }

    fn random_patch(rng: &mut impl Rng, n: usize) -> Patch {
        let ox: f64 = rng.random_range(-5e4..5e4);
        let oy: f64 = rng.random_range(-5e4..5e4);
        patch(
            (0..n)
                .map(|_| {
                    [
                        ox + rng.random_range(0.0..30.0),
                        oy + rng.random_range(0.0..80.0),
                        rng.random_range(20.0..110.0),
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn z_scale_examples() {
        assert_eq!(
            compute_z_scale(&[patch(vec![[0.0, 0.0, 10.0], [1.0, 0.0, 12.0], [2.0, 0.0, 14.0]])])
                .unwrap(),
            2.0
        );
        let a = patch(vec![[0.0; 3], [0.0, 0.0, 3.0]]); // demeaned extremum 1.5
        let b = patch(vec![[0.0; 3], [0.0, 0.0, 6.5]]); // 3.25
        assert_eq!(compute_z_scale(&[a, b]).unwrap(), 3.25);
        let flat = patch(vec![[0.0, 0.0, 4.0], [1.0, 1.0, 4.0]]);
        assert_eq!(compute_z_scale(&[flat]).unwrap(), 1.0);
        assert!(compute_z_scale(&[]).is_err());
    }

    #[test]
    fn two_point_normalization() {
        let (n, t) = normalize_patch(&patch(vec![[0.0, 0.0, 5.0], [2.0, 0.0, 7.0]]), 2.0).unwrap();
        assert_eq!(n.xyz, vec![[-1.0, 0.0, -0.5], [1.0, 0.0, 0.5]]);
        assert_eq!(t.xy_scale, 1.0);
        assert_eq!(t.z_mean, 6.0);
    }

    #[test]
    fn degenerate_xy_gets_unit_scale() {
        let (n, t) = normalize_patch(&patch(vec![[3.0, 3.0, 1.0], [3.0, 3.0, 2.0]]), 1.0).unwrap();
        assert_eq!(t.xy_scale, 1.0);
        assert_eq!(n.xyz[0][..2], [0.0, 0.0]);
    }

    #[test]
    fn already_normalized_is_fixed_point() {
        let p = patch(vec![[-1.0, 0.0, -0.25], [1.0, 0.0, 0.25], [0.0, 0.5, 0.0], [0.0, -0.5, 0.0]]);
        let (n, _) = normalize_patch(&p, 1.0).unwrap();
        for (a, b) in n.xyz.iter().zip(&p.xyz) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn roundtrip_and_unit_disk_on_random_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_patch(&mut rng, 200);
            let (n, t) = normalize_patch(&p, 7.5).unwrap();
            assert!(n.xyz.iter().all(|q| (q[0] * q[0] + q[1] * q[1]).sqrt() <= 1.0 + 1e-9));
            let back = denormalize_patch(&n, &t);
            for (a, b) in back.xyz.iter().zip(&p.xyz) {
                for d in 0..3 {
                    assert!((a[d] - b[d]).abs() <= 1e-6, "{a:?} vs {b:?}");
                }
            }
            let clean_back = back.clean_xyz.unwrap();
            assert!((clean_back[3][2] - p.clean_xyz.as_ref().unwrap()[3][2]).abs() <= 1e-6);
        }
    }

    #[test]
    fn rotation_examples() {
        let p = patch(vec![[1.0, 0.0, 0.3], [0.2, -0.4, -0.1]]);
        assert_eq!(rotate_patch_z(&p, 0.0), p);
        let r = rotate_patch_z(&p, std::f64::consts::PI);
        assert!((r.xyz[0][0] + 1.0).abs() <= 1e-12 && r.xyz[0][1].abs() <= 1e-12);
        for angle in [0.3, 1.7, -2.2] {
            let r = rotate_patch_z(&p, angle);
            assert!(r.xyz.iter().zip(&p.xyz).all(|(a, b)| a[2].to_bits() == b[2].to_bits()));
            assert_eq!(r.labels, p.labels);
            let back = rotate_patch_z(&r, -angle);
            for (a, b) in back.xyz.iter().chain(back.clean_xyz.as_ref().unwrap()).zip(
                p.xyz.iter().chain(p.clean_xyz.as_ref().unwrap()),
            ) {
                assert!((a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
            }
        }
    }
}
