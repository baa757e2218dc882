//! Exact k-nearest-neighbour search over small point sets in 2 or 3 dimensions.
//!
//! Results are ordered by `(squared distance, index)`, so equidistant points are
//! reported lowest index first. Every query is exact: a brute-force scan sorted
//! the same way returns identical indices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

/// A neighbour returned by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Immutable kd-tree over `D`-dimensional points.
#[derive(Debug, Clone)]
pub struct KnnIndex<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    /// `points` permuted into tree order, for cache-friendly leaf scans.
    sorted: Vec<[f64; D]>,
    nodes: Vec<Node>,
}

pub type KnnIndex2 = KnnIndex<2>;
pub type KnnIndex3 = KnnIndex<3>;

#[inline]
pub fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

impl<const D: usize> KnnIndex<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut index = Self {
            order: (0..points.len()).collect(),
            points,
            sorted: Vec::new(),
            nodes: Vec::new(),
        };
        if !index.points.is_empty() {
            index.build(0, index.points.len());
        }
        index.sorted = index.order.iter().map(|&i| index.points[i]).collect();
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.order[start..end] {
            for d in 0..D {
                lo[d] = lo[d].min(self.points[i][d]);
                hi[d] = hi[d].max(self.points[i][d]);
            }
        }
        let dim = (0..D)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[dim] - lo[dim] <= 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Split { dim, value, left: 0, right: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// The `min(k, len)` nearest points to `query`, sorted by distance then index.
    pub fn knn(&self, query: &[f64; D], k: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(k.min(self.len()));
        self.knn_into(query, k, &mut out);
        out
    }

    /// Same as [`knn`](Self::knn) but reuses `out`'s allocation.
    pub fn knn_into(&self, query: &[f64; D], k: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        let k = k.min(self.len());
        if k == 0 {
            return;
        }
        let mut heap = BinaryHeap::from(std::mem::take(out));
        let mut offsets = [0.0; D];
        self.search(0, query, k, &mut heap, &mut offsets, 0.0);
        let mut v = heap.into_vec();
        v.sort_unstable();
        *out = v;
    }

    /// Depth-first search; `box_dist` is the squared distance from the query to
    /// the node's cell, tracked incrementally through per-dimension `offsets`.
    fn search(
        &self,
        node: usize,
        q: &[f64; D],
        k: usize,
        heap: &mut BinaryHeap<Neighbor>,
        offsets: &mut [f64; D],
        box_dist: f64,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.sorted[start..end].iter().zip(&self.order[start..end]) {
                    let d = dist2(q, p);
                    if heap.len() < k {
                        heap.push(Neighbor { index: i, dist2: d });
                    } else if let Some(mut worst) = heap.peek_mut() {
                        if d < worst.dist2 || (d == worst.dist2 && i < worst.index) {
                            *worst = Neighbor { index: i, dist2: d };
                        }
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap, offsets, box_dist);
                let old = offsets[dim];
                let far_dist = box_dist - old * old + diff * diff;
                // Equal distance must still be explored: a tie may carry a lower index.
                if heap.len() < k || heap.peek().is_some_and(|w| far_dist <= w.dist2) {
                    offsets[dim] = diff;
                    self.search(far, q, k, heap, offsets, far_dist);
                    offsets[dim] = old;
                }
            }
        }
    }

    /// Nearest point, ties broken by lowest index.
    pub fn nearest(&self, query: &[f64; D]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyPoints("nearest-neighbour index"));
        }
        Ok(self.knn(query, 1)[0].index)
    }

    /// Indices of all points with squared distance `<= radius²`, ascending by index.
    pub fn within_radius(&self, query: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.radius_search(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_search(&self, node: usize, q: &[f64; D], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.sorted[start..end]
                        .iter()
                        .zip(&self.order[start..end])
                        .filter(|(p, _)| dist2(q, p) <= r2)
                        .map(|(_, &i)| i),
                );
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_search(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_search(far, q, r2, out);
                }
            }
        }
    }
}

impl KnnIndex2 {
    /// Index over the XY coordinates of 3D points.
    pub fn from_xy(points: &[[f64; 3]]) -> Self {
        Self::new(points.iter().map(|p| [p[0], p[1]]).collect())
    }
}

/// Nearest clean point to `query` when only XY is considered.
pub fn nn_xy(query: &[f64; 3], index: &KnnIndex2) -> Result<usize> {
    index.nearest(&[query[0], query[1]])
}
