//! Foundational point-set operations: normalization, farthest-point sampling,
//! voxel grids, plane fitting, and point-triangle distance.
//!
//! Ties everywhere break toward the lower point index so every operation is
//! deterministic and independent of thread count. Squared distances are used
//! internally where it helps; returned distances are always true lengths.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::par;

pub type Vec3 = Vector3<f64>;

/// Ordered list of 3D points with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    /// Builds a cloud, validating that every coordinate is finite and that
    /// normals (when present) match the point count and have unit length.
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    context: "normals".into(),
                    expected: points.len(),
                    got: ns.len(),
                });
            }
            for (i, n) in ns.iter().enumerate() {
                if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > 1e-5 {
                    return Err(Error::InvalidParameter(format!(
                        "normal {i} is not unit length"
                    )));
                }
            }
        }
        Ok(Self { points, normals })
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    /// New cloud keeping only `indices`, in the given order. Normals follow.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut points = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self.points.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.points.len(),
            })?;
            points.push(*p);
        }
        let normals = self
            .normals
            .as_ref()
            .map(|ns| indices.iter().map(|&i| ns[i]).collect());
        Ok(Self { points, normals })
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Option<Self> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in &points[1..] {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some(Self { min, max })
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn padded(&self, pad: f64) -> Self {
        Self {
            min: self.min.add_scalar(-pad),
            max: self.max.add_scalar(pad),
        }
    }
}

/// Centering/scaling applied by [`normalize_unit_sphere`]; invertible.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.center)) / self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p * self.scale + Vec3::from(self.center)
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
            normals: cloud.normals.clone(),
        }
    }

    pub fn invert_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.invert(p)).collect(),
            normals: cloud.normals.clone(),
        }
    }
}

/// Least-squares plane through a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub centroid: Vec3,
    pub normal: Vec3,
}

impl Plane {
    /// Signed offset of `p` from the plane along the normal.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.centroid).dot(&self.normal)
    }
}

/// Centers the cloud on its centroid and scales the farthest point to radius
/// 1. A cloud of coincident points keeps scale 1 (degenerate but valid).
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Result<(PointCloud, NormalizationTransform)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut center = Vec3::zeros();
    for p in cloud.points() {
        center += p;
    }
    center /= cloud.len() as f64;
    let mut scale = 0.0f64;
    for p in cloud.points() {
        scale = scale.max((p - center).norm());
    }
    if scale <= 0.0 {
        scale = 1.0;
    }
    let transform = NormalizationTransform {
        center: center.into(),
        scale,
    };
    Ok((transform.apply_cloud(cloud), transform))
}

/// Greedy maximin subset selection: each pick maximizes the minimum distance
/// to the already-selected set, ties broken toward the lower index.
pub fn farthest_point_sample(cloud: &PointCloud, m: usize, start: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    if m > cloud.len() {
        return Err(Error::TooFewPoints {
            needed: m,
            have: cloud.len(),
        });
    }
    if start >= cloud.len() {
        return Err(Error::IndexOutOfRange {
            index: start,
            len: cloud.len(),
        });
    }
    Ok(fps_indices(cloud.points(), m, start))
}

/// FPS over a raw point slice; caller guarantees `1 <= m <= n`, `start < n`.
pub(crate) fn fps_indices(points: &[Vec3], m: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut selected = Vec::with_capacity(m);
    let mut last = start;
    selected.push(start);
    for _ in 1..m {
        let anchor = points[last];
        par::update_values(&mut min_d2, |i, d| {
            d.min((points[i] - anchor).norm_squared())
        });
        let mut best = 0usize;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d2 {
                best_d2 = d;
                best = i;
            }
        }
        selected.push(best);
        last = best;
    }
    selected
}

/// Centers of all cells of the regular grid covering `bounds`; the number of
/// cells per axis is `ceil(extent / edge)`. Zero-extent axes are expanded by
/// one edge so the grid is never degenerate.
pub fn voxel_grid_centers(bounds: &Aabb, edge: f64) -> Result<Vec<Vec3>> {
    if edge <= 0.0 || !edge.is_finite() {
        return Err(Error::InvalidEdge(format!(
            "edge must be positive, got {edge}"
        )));
    }
    let mut lo = [0.0f64; 3];
    let mut cells = [0usize; 3];
    for a in 0..3 {
        let extent = bounds.max[a] - bounds.min[a];
        if extent <= 0.0 {
            lo[a] = bounds.min[a] - edge / 2.0;
            cells[a] = 1;
        } else {
            lo[a] = bounds.min[a];
            cells[a] = (extent / edge).ceil().max(1.0) as usize;
        }
    }
    let total = cells[0]
        .checked_mul(cells[1])
        .and_then(|v| v.checked_mul(cells[2]))
        .ok_or_else(|| Error::InvalidEdge("voxel grid overflows".into()))?;
    if total > 100_000_000 {
        return Err(Error::InvalidEdge(format!(
            "voxel grid has {total} cells; edge {edge} is too small for these bounds"
        )));
    }
    let mut centers = Vec::with_capacity(total);
    for ix in 0..cells[0] {
        let x = lo[0] + (ix as f64 + 0.5) * edge;
        for iy in 0..cells[1] {
            let y = lo[1] + (iy as f64 + 0.5) * edge;
            for iz in 0..cells[2] {
                centers.push(Vec3::new(x, y, lo[2] + (iz as f64 + 0.5) * edge));
            }
        }
    }
    Ok(centers)
}

/// Euclidean distance from `p` to the closed triangle `tri`. Degenerate
/// triangles fall back to the nearest edge treated as a segment (or point).
pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let n2 = ab.cross(&ac).norm_squared();
    if n2 <= 1e-18 * ab.norm_squared() * ac.norm_squared() || n2 == 0.0 {
        return point_segment_distance(p, &a, &b)
            .min(point_segment_distance(p, &b, &c))
            .min(point_segment_distance(p, &c, &a));
    }
    (p - closest_point_on_triangle(p, &a, &b, &c)).norm()
}

fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

// Region-based closest point on a triangle (Ericson, Real-Time Collision
// Detection, section 5.1.5).
fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// PCA plane fit: centroid is the mean, the normal is the eigenvector of the
/// smallest covariance eigenvalue. The sign convention makes the first
/// component of magnitude > 1e-12 positive. Neighborhoods that do not span a
/// plane (coincident or collinear points) are rejected.
pub fn fit_plane(points: &[Vec3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: points.len(),
        });
    }
    let n = points.len() as f64;
    let mut centroid = Vec3::zeros();
    for p in points {
        centroid += p;
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda_mid = eig.eigenvalues[order[1]].max(0.0);
    let lambda_max = eig.eigenvalues[order[2]].max(0.0);
    if lambda_mid <= 1e-12 * lambda_max || lambda_max == 0.0 {
        return Err(Error::DegenerateNeighborhood);
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into();
    normal.normalize_mut();
    for a in 0..3 {
        if normal[a].abs() > 1e-12 {
            if normal[a] < 0.0 {
                normal = -normal;
            }
            break;
        }
    }
    Ok(Plane { centroid, normal })
}
