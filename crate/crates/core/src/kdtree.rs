//! Exact k-nearest-neighbor search over an immutable point set.
//!
//! The index is a median-split kd-tree stored as a reordered index array
//! (each subtree is a contiguous range with its root at the middle). It works
//! in any dimension, so the same structure serves 3D coordinate queries and
//! the higher-dimensional correspondence-feature space. Results are exactly
//! those of a linear scan; distance ties break toward the lower point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    data: Vec<f64>, // n * dim, row-major, original order
    dim: usize,
    len: usize,
    order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    d2: f64,
    idx: u32,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        let mut data = Vec::with_capacity(cloud.len() * 3);
        for p in cloud.points() {
            data.extend_from_slice(&[p.x, p.y, p.z]);
        }
        Self::from_flat(data, 3)
    }

    /// Index over `n` rows of `dim` values each (row-major).
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                context: "spatial index rows".into(),
                expected: dim,
                got: data.len() % dim,
            });
        }
        let len = data.len() / dim;
        if len == 0 {
            return Err(Error::EmptyCloud);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "spatial index requires finite coordinates".into(),
            ));
        }
        let mut index = Self {
            data,
            dim,
            len,
            order: (0..len as u32).collect(),
        };
        index.build_range(0, len, 0);
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn coord(&self, idx: u32, axis: usize) -> f64 {
        self.data[idx as usize * self.dim + axis]
    }

    fn build_range(&mut self, lo: usize, hi: usize, depth: usize) {
        if hi - lo <= 1 {
            return;
        }
        let axis = depth % self.dim;
        let mid = (hi - lo) / 2;
        let (data, dim) = (&self.data, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid, |&a, &b| {
            data[a as usize * dim + axis]
                .total_cmp(&data[b as usize * dim + axis])
                .then_with(|| a.cmp(&b))
        });
        self.build_range(lo, lo + mid, depth + 1);
        self.build_range(lo + mid + 1, hi, depth + 1);
    }

    /// The `min(k, n)` nearest rows to `query`, sorted by ascending distance
    /// with ties broken toward the lower index. Returned distances are
    /// Euclidean lengths. `k = 0` yields an empty result.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "knn query".into(),
                expected: self.dim,
                got: query.len(),
            });
        }
        let k = k.min(self.len);
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.len, 0, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|n| (n.idx as usize, n.d2.sqrt()))
            .collect())
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: &[f64],
        k: usize,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let mut d2 = 0.0;
        for (a, q) in query.iter().enumerate() {
            let diff = q - self.coord(idx, a);
            d2 += diff * diff;
        }
        let candidate = Neighbor { d2, idx };
        if heap.len() < k {
            heap.push(candidate);
        } else if candidate < *heap.peek().expect("heap non-empty") {
            heap.pop();
            heap.push(candidate);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let delta = query[axis] - self.coord(idx, axis);
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, query, k, heap);
        // Visit the far side unless every point there is strictly worse than
        // the current k-th candidate (equal distance may still win on index).
        let prune = heap.len() == k && delta * delta > heap.peek().expect("full").d2;
        if !prune {
            self.search(far.0, far.1, depth + 1, query, k, heap);
        }
    }
}

/// Builds an exact nearest-neighbor index over a cloud's coordinates.
pub fn build_spatial_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(cloud)
}
