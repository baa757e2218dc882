//! Independent O(N²) reimplementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type P = [f64; 3];

fn d3(a: &P, b: &P) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Random cloud: a noisy sheet with a few points thrown off it.
pub fn random_cloud(seed: u64, n: usize) -> Vec<P> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let mut z = 0.1 * (3.0 * x).sin() + rng.random_range(-0.01..0.01);
            if rng.random::<f64>() < 0.07 {
                z += rng.random_range(-0.5..0.5);
            }
            [x, y, z]
        })
        .collect()
}

/// Mean distance to the k nearest others (ties irrelevant: equal distances sum equally).
pub fn brute_statistical(points: &[P], k: usize, ratio: f64) -> Vec<bool> {
    let mean: Vec<f64> = (0..points.len())
        .map(|i| {
            let mut d: Vec<f64> =
                (0..points.len()).filter(|&j| j != i).map(|j| d3(&points[i], &points[j])).collect();
            d.sort_by(f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let n = mean.len() as f64;
    let mu = mean.iter().sum::<f64>() / n;
    let sd = (mean.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n).sqrt();
    mean.iter().map(|&m| m > mu + ratio * sd).collect()
}

pub fn brute_radius(points: &[P], radius: f64, min: usize) -> Vec<bool> {
    (0..points.len())
        .map(|i| {
            let r2 = radius * radius;
            let count = (0..points.len())
                .filter(|&j| j != i)
                .filter(|&j| {
                    let d2: f64 = (0..3).map(|c| (points[i][c] - points[j][c]).powi(2)).sum();
                    d2 <= r2
                })
                .count();
            count < min
        })
        .collect()
}

/// Gauss-Jordan elimination with full pivoting.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for r in k..n {
            for c in k..n {
                if a[r][c].abs() > best {
                    best = a[r][c].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_of.swap(k, pc);
        let p = a[k][k];
        for c in 0..n {
            a[k][c] /= p;
        }
        b[k] /= p;
        for r in 0..n {
            if r != k && a[r][k] != 0.0 {
                let f = a[r][k];
                for c in 0..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_of[k]] = b[k];
    }
    x
}

/// Ordinary kriging prediction with an explicit linear variogram.
pub fn kriging_oracle(samples: &[P], q: [f64; 2], slope: f64, nugget: f64) -> f64 {
    let g = |h: f64| if h <= 1e-12 { 0.0 } else { nugget + slope * h };
    let hxy = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let n = samples.len();
    let mut a = vec![vec![1.0; n + 1]; n + 1];
    a[n][n] = 0.0;
    let mut b = vec![1.0; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = g(hxy([samples[i][0], samples[i][1]], [samples[j][0], samples[j][1]]));
        }
        b[i] = g(hxy([samples[i][0], samples[i][1]], q));
    }
    let w = gauss_jordan(a, b);
    (0..n).map(|i| w[i] * samples[i][2]).sum()
}

/// Two-sided mean of squared nearest-neighbour distances.
pub fn brute_chamfer(a: &[P], b: &[P]) -> f64 {
    let one = |x: &[P], y: &[P]| {
        x.iter()
            .map(|p| y.iter().map(|q| d3(p, q).powi(2)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    one(a, b) + one(b, a)
}
