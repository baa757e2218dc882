use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::knn::{KnnIndex3, Neighbor};

/// Fixed-degree neighbour lists, row-major `[N × k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    pub neighbors: Vec<usize>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }
}

fn check_size(n: usize, k: usize) -> Result<()> {
    if n <= k {
        return Err(Error::NotEnoughPoints { needed: k + 1, got: n });
    }
    Ok(())
}

/// The `k` nearest other points of every point in 3D, ties by lower index.
pub fn knn_graph(points: &[[f64; 3]], k: usize) -> Result<KnnGraph> {
    check_size(points.len(), k)?;
    let index = KnnIndex3::new(points.to_vec());
    let mut neighbors = Vec::with_capacity(points.len() * k);
    let mut buf = Vec::new();
    for (i, p) in points.iter().enumerate() {
        index.knn_into(p, k + 1, &mut buf);
        push_without_self(&buf, i, k, &mut neighbors);
    }
    Ok(KnnGraph { k, neighbors })
}

fn push_without_self(sorted: &[Neighbor], i: usize, k: usize, out: &mut Vec<usize>) {
    let mut taken = 0;
    for n in sorted {
        if n.index != i && taken < k {
            out.push(n.index);
            taken += 1;
        }
    }
}

/// Same contract as [`knn_graph`] for rows of an arbitrary-width feature matrix.
///
/// Squared distances come from one matrix product, `|a|² + |b|² − 2a·b`.
pub fn knn_graph_features(h: ArrayView2<f64>, k: usize) -> Result<KnnGraph> {
    let n = h.nrows();
    check_size(n, k)?;
    let norms: Vec<f64> = h.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let gram: Array2<f64> = h.dot(&h.t());
    let mut neighbors = Vec::with_capacity(n * k);
    // Ascending (distance, index) buffer of the best k so far; j increases, so an
    // equal distance never displaces an earlier entry.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..n {
        best.clear();
        let g = gram.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let d = (norms[i] + norms[j] - 2.0 * g[j]).max(0.0);
            if best.len() == k {
                if d >= best[k - 1].0 {
                    continue;
                }
                best.pop();
            }
            let pos = best.partition_point(|e| e.0 <= d);
            best.insert(pos, (d, j));
        }
        neighbors.extend(best.iter().map(|&(_, j)| j));
    }
    Ok(KnnGraph { k, neighbors })
}
