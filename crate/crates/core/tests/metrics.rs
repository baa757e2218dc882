mod common;

use common::*;
use mbes_core::metrics::{chamfer, classification_metrics, z_errors};

#[test]
fn chamfer_matches_brute_force() {
    for seed in 0..5 {
        let a = random_cloud(seed, 300);
        let b = random_cloud(seed + 50, 250);
        let got = chamfer(&a, &b).unwrap();
        assert!((got - brute_chamfer(&a, &b)).abs() < 1e-9);
        assert!((got - chamfer(&b, &a).unwrap()).abs() < 1e-12);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn z_errors_scale_linearly() {
    let clean = random_cloud(3, 200);
    let noisy = random_cloud(4, 200);
    let (mae, rmse) = z_errors(&noisy, &clean).unwrap();
    let scale = |v: &[P]| v.iter().map(|p| [p[0], p[1], p[2] * 4.0]).collect::<Vec<P>>();
    let (mae4, rmse4) = z_errors(&scale(&noisy), &scale(&clean)).unwrap();
    assert!((mae4 - 4.0 * mae).abs() < 1e-12 && (rmse4 - 4.0 * rmse).abs() < 1e-12);
    assert!(rmse >= mae);
}

#[test]
fn all_inlier_classifier_accuracy() {
    // 737 outliers in 10000 points.
    let gt: Vec<bool> = (0..10_000).map(|i| i < 737).collect();
    let r = classification_metrics(&vec![false; 10_000], &gt).unwrap();
    assert!((r.accuracy - 0.9263).abs() < 1e-4);
    assert_eq!(r.f1, 0.0);
}
