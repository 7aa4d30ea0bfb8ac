//! Augmented point-cloud generation.
//!
//! Three methods produce the augmented clouds x_1..x_M from an input x_0:
//! Gaussian jitter, uniform sampling from a mesh's vertices, and a four-stage
//! upsampling pipeline (voxel seed sampling, surface projection onto local
//! PCA planes, bias-based outlier removal, farthest-point resampling). An
//! `IdentityCopy` method returns exact copies and exists as a test hook.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{
    self, fit_plane, point_triangle_distance, voxel_grid_centers, PointCloud, Vec3,
};
use crate::kdtree::SpatialIndex;
use crate::mesh::TriangleMesh;
use crate::par;

/// splitmix64 finalizer; bijective, so distinct inputs stay distinct.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cloud seed for augmentation `index` under `master`. Distinct indices
/// always map to distinct seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JitterParams {
    /// Per-coordinate Gaussian noise scale, in normalized-cloud units.
    pub sigma: f64,
    pub rng_seed: u64,
}

impl JitterParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "jitter sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UpsampleParams {
    /// Upsampling factor; the dense target is `floor(scale_r * n)` points.
    pub scale_r: f64,
    /// Voxel cell width; `None` picks `bbox_diagonal / (3 * cbrt(scale_r * n))`.
    pub voxel_edge: Option<f64>,
    /// Max center-to-surface distance for a voxel center to become a seed;
    /// `None` defaults to one voxel edge.
    pub seed_band: Option<f64>,
    /// Neighbors used to estimate surface distance (triangles are formed
    /// from all 3-combinations of these).
    pub k_triangle: usize,
    /// Neighbors for the local plane fit; `None` picks
    /// `clamp(n/32, 4, 12)`. A least-squares plane sits inside curved
    /// surfaces by roughly k/n of the local radius, so the default shrinks
    /// with the cloud.
    pub k_plane: Option<usize>,
    /// Neighboring projections used for the outlier bias.
    pub k_bias: usize,
    /// Projections with bias above `outlier_factor * mean_bias` are dropped.
    pub outlier_factor: f64,
    /// Whether the dense set keeps the original points.
    pub include_original: bool,
    pub rng_seed: u64,
}

impl Default for UpsampleParams {
    fn default() -> Self {
        Self {
            scale_r: 4.0,
            voxel_edge: None,
            seed_band: None,
            k_triangle: 3,
            k_plane: None,
            k_bias: 8,
            outlier_factor: 1.5,
            include_original: true,
            rng_seed: 0,
        }
    }
}

impl UpsampleParams {
    pub fn validate(&self) -> Result<()> {
        if self.scale_r < 1.0 || !self.scale_r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale_r must be >= 1, got {}",
                self.scale_r
            )));
        }
        if let Some(e) = self.voxel_edge {
            if e <= 0.0 || !e.is_finite() {
                return Err(Error::InvalidEdge(format!(
                    "voxel edge must be positive, got {e}"
                )));
            }
        }
        if let Some(b) = self.seed_band {
            if b < 0.0 || !b.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "seed band must be >= 0, got {b}"
                )));
            }
        }
        if self.k_triangle < 3 {
            return Err(Error::InvalidParameter("k_triangle must be >= 3".into()));
        }
        if let Some(k) = self.k_plane {
            if k < 3 {
                return Err(Error::InvalidParameter("k_plane must be >= 3".into()));
            }
        }
        if self.k_bias < 1 {
            return Err(Error::InvalidParameter("k_bias must be >= 1".into()));
        }
        if self.outlier_factor <= 0.0 || !self.outlier_factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "outlier factor must be positive, got {}",
                self.outlier_factor
            )));
        }
        Ok(())
    }

    /// Voxel edge to use for `cloud`, resolving the documented default.
    pub fn resolved_edge(&self, cloud: &PointCloud) -> f64 {
        match self.voxel_edge {
            Some(e) => e,
            None => {
                let diag = cloud
                    .bounding_box()
                    .map(|b| b.diagonal())
                    .unwrap_or(0.0)
                    .max(1e-9);
                let dense = (self.scale_r * cloud.len() as f64).max(1.0);
                diag / (3.0 * dense.cbrt())
            }
        }
    }

    pub fn resolved_band(&self, cloud: &PointCloud) -> f64 {
        self.seed_band.unwrap_or_else(|| self.resolved_edge(cloud))
    }

    pub fn resolved_k_plane(&self, n: usize) -> usize {
        self.k_plane.unwrap_or_else(|| (n / 32).clamp(4, 12))
    }
}

/// A seed voxel center together with its projection onto the locally fitted
/// plane: `projected = seed + distance * direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedProjection {
    pub seed: Vec3,
    pub projected: Vec3,
    /// Unit direction, oriented from the plane toward the seed.
    pub direction: Vec3,
    /// Signed travel along `direction`; <= 0 moves the seed onto the plane.
    pub distance: f64,
    /// Mean distance to nearby projections, filled by the outlier stage.
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethodKind {
    Jitter,
    MeshSurface,
    Upsample,
    IdentityCopy,
}

/// Augmentation method with its parameters. Per-cloud RNG seeds come from
/// the TTA master seed, not from here.
#[derive(Debug, Clone)]
pub enum AugmentMethod {
    Jitter { sigma: f64 },
    MeshSurface { mesh: TriangleMesh },
    Upsample(UpsampleParams),
    IdentityCopy,
}

impl AugmentMethod {
    pub fn kind(&self) -> AugmentMethodKind {
        match self {
            AugmentMethod::Jitter { .. } => AugmentMethodKind::Jitter,
            AugmentMethod::MeshSurface { .. } => AugmentMethodKind::MeshSurface,
            AugmentMethod::Upsample(_) => AugmentMethodKind::Upsample,
            AugmentMethod::IdentityCopy => AugmentMethodKind::IdentityCopy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AugmentMethod::Jitter { sigma } => JitterParams {
                sigma: *sigma,
                rng_seed: 0,
            }
            .validate(),
            AugmentMethod::MeshSurface { mesh } => {
                if mesh.vertex_count() == 0 {
                    Err(Error::EmptyMesh)
                } else {
                    Ok(())
                }
            }
            AugmentMethod::Upsample(p) => p.validate(),
            AugmentMethod::IdentityCopy => Ok(()),
        }
    }
}

/// The original cloud plus its M augmented versions, with per-cloud seeds.
#[derive(Debug, Clone)]
pub struct AugmentationSet {
    pub original: PointCloud,
    pub augmented: Vec<PointCloud>,
    pub method: AugmentMethodKind,
    pub seeds: Vec<u64>,
}

impl AugmentationSet {
    /// Original followed by the augmented clouds, in order.
    pub fn clouds(&self) -> impl Iterator<Item = &PointCloud> {
        std::iter::once(&self.original).chain(self.augmented.iter())
    }

    pub fn sample_count(&self) -> usize {
        self.augmented.len()
    }
}

/// Adds seeded iid Gaussian noise to every coordinate: `x_k = x_0 + sigma*z`.
/// Normals, when present, are copied unchanged. `sigma = 0` is the identity.
pub fn jitter(cloud: &PointCloud, params: &JitterParams) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    params.validate()?;
    if params.sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(params.rng_seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let mut q = *p;
            for a in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                q[a] += params.sigma * z;
            }
            q
        })
        .collect();
    PointCloud::new(points, cloud.normals().map(|n| n.to_vec()))
}

/// Draws `m` vertices from the mesh: uniformly without replacement when
/// `m <= vertex_count`, with replacement otherwise. If the mesh has faces,
/// area-weighted vertex normals are attached.
pub fn sample_mesh_vertices(mesh: &TriangleMesh, m: usize, rng_seed: u64) -> Result<PointCloud> {
    let v = mesh.vertex_count();
    if v == 0 {
        return Err(Error::EmptyMesh);
    }
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let indices: Vec<usize> = if m <= v {
        rand::seq::index::sample(&mut rng, v, m).into_vec()
    } else {
        (0..m).map(|_| rng.random_range(0..v)).collect()
    };
    let points: Vec<Vec3> = indices.iter().map(|&i| mesh.vertices[i]).collect();
    let normals = if mesh.face_count() > 0 {
        let vn = mesh.vertex_normals();
        Some(indices.iter().map(|&i| vn[i]).collect())
    } else {
        None
    };
    PointCloud::new(points, normals)
}

/// Voxel centers whose estimated distance to the surface is within the seed
/// band. The estimate is the minimum point-triangle distance over all
/// triangles formed by the center's `k_triangle` nearest cloud points; the
/// grid covers the cloud's bounding box padded by one voxel edge.
pub fn sample_seeds(cloud: &PointCloud, params: &UpsampleParams) -> Result<Vec<Vec3>> {
    params.validate()?;
    if cloud.len() < params.k_triangle {
        return Err(Error::TooFewPoints {
            needed: params.k_triangle,
            have: cloud.len(),
        });
    }
    let edge = params.resolved_edge(cloud);
    let band = params.resolved_band(cloud);
    let bounds = cloud.bounding_box().expect("non-empty cloud").padded(edge);
    let centers = voxel_grid_centers(&bounds, edge)?;
    let index = SpatialIndex::build(cloud)?;
    let keep = par::map_slice(&centers, |c| {
        let nn = index
            .knn(c.as_slice(), params.k_triangle)
            .expect("query dim matches");
        estimated_surface_distance(cloud.points(), c, &nn) <= band
    });
    Ok(centers
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect())
}

fn estimated_surface_distance(points: &[Vec3], center: &Vec3, nn: &[(usize, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..nn.len() {
        for j in (i + 1)..nn.len() {
            for l in (j + 1)..nn.len() {
                let tri = [points[nn[i].0], points[nn[j].0], points[nn[l].0]];
                best = best.min(point_triangle_distance(center, &tri));
            }
        }
    }
    best
}

/// Projects each seed onto the plane fitted to its `k_plane` nearest cloud
/// points. The stored direction points from the plane toward the seed, so
/// the stored distance is <= 0. Seeds with degenerate neighborhoods (no
/// well-defined plane) are dropped.
pub fn project_seeds(
    cloud: &PointCloud,
    seeds: &[Vec3],
    params: &UpsampleParams,
) -> Result<Vec<SeedProjection>> {
    params.validate()?;
    let k_plane = params.resolved_k_plane(cloud.len());
    if cloud.len() < k_plane {
        return Err(Error::TooFewPoints {
            needed: k_plane,
            have: cloud.len(),
        });
    }
    let index = SpatialIndex::build(cloud)?;
    let projected = par::map_slice(seeds, |seed| {
        let nn = index
            .knn(seed.as_slice(), k_plane)
            .expect("query dim matches");
        let neighborhood: Vec<Vec3> = nn.iter().map(|&(i, _)| cloud.points()[i]).collect();
        let plane = fit_plane(&neighborhood).ok()?;
        let mut direction = plane.normal;
        let offset = (seed - plane.centroid).dot(&direction);
        if offset < 0.0 {
            direction = -direction;
        }
        let distance = -(seed - plane.centroid).dot(&direction);
        Some(SeedProjection {
            seed: *seed,
            projected: seed + direction * distance,
            direction,
            distance,
            bias: 0.0,
        })
    });
    Ok(projected.into_iter().flatten().collect())
}

/// Drops projections whose bias exceeds `outlier_factor` times the mean bias.
/// The bias of a projection is the mean distance from its projected point to
/// its `k_bias` nearest other projected points (0 for a lone projection).
/// If the filter would drop everything, all projections are kept and a
/// warning is logged.
pub fn remove_outliers(
    projections: &[SeedProjection],
    params: &UpsampleParams,
) -> Result<Vec<SeedProjection>> {
    params.validate()?;
    if projections.is_empty() {
        return Ok(Vec::new());
    }
    if projections.len() == 1 {
        let mut only = projections[0];
        only.bias = 0.0;
        return Ok(vec![only]);
    }
    let flat: Vec<f64> = projections
        .iter()
        .flat_map(|p| [p.projected.x, p.projected.y, p.projected.z])
        .collect();
    let index = SpatialIndex::from_flat(flat, 3)?;
    let k = params.k_bias.min(projections.len() - 1);
    let biases = par::map_range(projections.len(), |i| {
        let nn = index
            .knn(projections[i].projected.as_slice(), k + 1)
            .expect("query dim matches");
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(j, d) in &nn {
            if j != i && count < k {
                sum += d;
                count += 1;
            }
        }
        sum / count as f64
    });
    let mean_bias = biases.iter().sum::<f64>() / biases.len() as f64;
    let threshold = params.outlier_factor * mean_bias;
    let kept: Vec<SeedProjection> = projections
        .iter()
        .zip(&biases)
        .filter(|(_, &b)| b <= threshold)
        .map(|(p, &b)| SeedProjection { bias: b, ..*p })
        .collect();
    if kept.is_empty() {
        log::warn!(
            "outlier filter would drop all {} projections (threshold {threshold:.3e}); keeping all",
            projections.len()
        );
        return Ok(projections
            .iter()
            .zip(&biases)
            .map(|(p, &b)| SeedProjection { bias: b, ..*p })
            .collect());
    }
    Ok(kept)
}

/// The dense point set y: accepted projections, preceded by the original
/// points when `include_original` is set.
pub fn upsample_dense(cloud: &PointCloud, params: &UpsampleParams) -> Result<Vec<Vec3>> {
    let needed = params.k_triangle.max(params.resolved_k_plane(cloud.len()));
    if cloud.len() < needed {
        return Err(Error::TooFewPoints {
            needed,
            have: cloud.len(),
        });
    }
    let seeds = sample_seeds(cloud, params)?;
    let projections = project_seeds(cloud, &seeds, params)?;
    let kept = remove_outliers(&projections, params)?;
    let mut dense = Vec::with_capacity(cloud.len() + kept.len());
    if params.include_original {
        dense.extend_from_slice(cloud.points());
    }
    dense.extend(kept.iter().map(|p| p.projected));
    Ok(dense)
}

/// Runs the full upsampling pipeline and farthest-point-samples the dense set
/// down to `target_count` points (default `floor(scale_r * n)`). The FPS
/// start index is derived from the params' RNG seed.
pub fn upsample(
    cloud: &PointCloud,
    params: &UpsampleParams,
    target_count: Option<usize>,
) -> Result<PointCloud> {
    params.validate()?;
    let target = match target_count {
        Some(t) => t,
        None => (params.scale_r * cloud.len() as f64).floor() as usize,
    };
    if target == 0 {
        return Err(Error::InvalidParameter("target count must be >= 1".into()));
    }
    let dense = upsample_dense(cloud, params)?;
    if dense.len() < target {
        return Err(Error::InsufficientDensity {
            have: dense.len(),
            target,
        });
    }
    let start = (splitmix64(params.rng_seed) % dense.len() as u64) as usize;
    let indices = geometry::fps_indices(&dense, target, start);
    PointCloud::from_points(indices.into_iter().map(|i| dense[i]).collect())
}

/// Generation recipe shared by all TTA entry points.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    pub method: AugmentMethod,
    pub samples_m: usize,
    pub master_seed: u64,
}

/// Produces M augmented clouds, each resampled to the original point count.
/// Per-cloud seeds are `derive_seed(master_seed, k)`; generation is
/// order-deterministic regardless of thread count. Any per-cloud failure
/// aborts the whole set.
pub fn make_augmentations(cloud: &PointCloud, plan: &AugmentPlan) -> Result<AugmentationSet> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    plan.method.validate()?;
    let n = cloud.len();
    let m = plan.samples_m;
    let seeds: Vec<u64> = (0..m as u64)
        .map(|k| derive_seed(plan.master_seed, k))
        .collect();

    let augmented: Vec<PointCloud> = match &plan.method {
        AugmentMethod::IdentityCopy => (0..m).map(|_| cloud.clone()).collect(),
        AugmentMethod::Jitter { sigma } => {
            let sigma = *sigma;
            collect_results(par::map_slice(&seeds, |&s| {
                jitter(cloud, &JitterParams { sigma, rng_seed: s })
            }))?
        }
        AugmentMethod::MeshSurface { mesh } => collect_results(par::map_slice(&seeds, |&s| {
            sample_mesh_vertices(mesh, n, s)
        }))?,
        AugmentMethod::Upsample(base) => {
            if m == 0 {
                Vec::new()
            } else {
                // The seed/project/outlier stages are deterministic in the
                // input, so the dense set is computed once; each augmented
                // cloud is an FPS run from its own (distinct) start index.
                let dense = upsample_dense(cloud, base)?;
                if dense.len() < n {
                    return Err(Error::InsufficientDensity {
                        have: dense.len(),
                        target: n,
                    });
                }
                let starts = distinct_starts(&seeds, dense.len());
                collect_results(par::map_slice(&starts, |&start| {
                    let indices = geometry::fps_indices(&dense, n, start);
                    PointCloud::from_points(indices.into_iter().map(|i| dense[i]).collect())
                }))?
            }
        }
    };

    Ok(AugmentationSet {
        original: cloud.clone(),
        augmented,
        method: plan.method.kind(),
        seeds,
    })
}

fn collect_results(items: Vec<Result<PointCloud>>) -> Result<Vec<PointCloud>> {
    items.into_iter().collect()
}

/// Seed-derived FPS start indices, nudged by linear probing so the runs of
/// one set never reuse a start (possible only while M <= len).
fn distinct_starts(seeds: &[u64], len: usize) -> Vec<usize> {
    let mut used = vec![false; len];
    let mut starts = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let mut idx = (splitmix64(s) % len as u64) as usize;
        if starts.len() < len {
            while used[idx] {
                idx = (idx + 1) % len;
            }
            used[idx] = true;
        }
        starts.push(idx);
    }
    starts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_cloud(side: usize, spacing: f64) -> PointCloud {
        let pts: Vec<Vec3> = (0..side)
            .flat_map(|i| {
                (0..side).map(move |j| Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0))
            })
            .collect();
        PointCloud::from_points(pts).unwrap()
    }

    fn sphere_cloud(n: usize) -> PointCloud {
        // Fibonacci sphere: deterministic, near-uniform.
        let phi = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let t = phi * i as f64;
                Vec3::new(r * t.cos(), y, r * t.sin())
            })
            .collect();
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn jitter_zero_sigma_is_identity() {
        let c = sphere_cloud(64);
        let out = jitter(
            &c,
            &JitterParams {
                sigma: 0.0,
                rng_seed: 9,
            },
        )
        .unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn jitter_same_seed_bit_identical() {
        let c = sphere_cloud(128);
        let p = JitterParams {
            sigma: 0.05,
            rng_seed: 1234,
        };
        assert_eq!(jitter(&c, &p).unwrap(), jitter(&c, &p).unwrap());
    }

    #[test]
    fn jitter_statistics_match_sigma() {
        let n = 10_000;
        let c = PointCloud::from_points(vec![Vec3::zeros(); n]).unwrap();
        let out = jitter(
            &c,
            &JitterParams {
                sigma: 0.05,
                rng_seed: 7,
            },
        )
        .unwrap();
        for a in 0..3 {
            let mean: f64 = out.points().iter().map(|p| p[a]).sum::<f64>() / n as f64;
            let var: f64 = out
                .points()
                .iter()
                .map(|p| (p[a] - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            let std = var.sqrt();
            assert!(std > 0.0475 && std < 0.0525, "std {std} out of band");
            // Mean displacement stays within 3*sigma/sqrt(n) of zero.
            assert!(mean.abs() < 3.0 * 0.05 / (n as f64).sqrt() * 1.5);
        }
    }

    #[test]
    fn jitter_copies_normals() {
        let normals = vec![Vec3::new(0.0, 0.0, 1.0); 4];
        let c = PointCloud::new(vec![Vec3::zeros(); 4], Some(normals.clone())).unwrap();
        let out = jitter(
            &c,
            &JitterParams {
                sigma: 0.1,
                rng_seed: 3,
            },
        )
        .unwrap();
        assert_eq!(out.normals().unwrap(), &normals[..]);
    }

    #[test]
    fn mesh_sampling_all_vertices_is_permutation() {
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let out = sample_mesh_vertices(&mesh, 4, 5).unwrap();
        let mut seen: Vec<Vec3> = out.points().to_vec();
        seen.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap());
        let mut want = mesh.vertices.clone();
        want.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap());
        assert_eq!(seen, want);
    }

    #[test]
    fn mesh_oversampling_draws_existing_vertices() {
        let mesh = TriangleMesh::new(
            (0..50).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            vec![],
        )
        .unwrap();
        let out = sample_mesh_vertices(&mesh, 200, 11).unwrap();
        assert_eq!(out.len(), 200);
        for p in out.points() {
            assert!(mesh.vertices.contains(p));
        }
        assert!(out.normals().is_none());
    }

    #[test]
    fn mesh_sampling_attaches_unit_normals() {
        let mesh =
            TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let out = sample_mesh_vertices(&mesh, 3, 2).unwrap();
        for n in out.normals().unwrap() {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seeds_on_planar_cloud_stay_in_slab() {
        let c = grid_cloud(10, 0.111);
        // Default band (one voxel edge) keeps the slab cells straddling the
        // plane; their centers sit half an edge away.
        let params = UpsampleParams {
            voxel_edge: Some(0.2),
            ..Default::default()
        };
        let seeds = sample_seeds(&c, &params).unwrap();
        assert!(!seeds.is_empty());
        for s in &seeds {
            assert!(s.z.abs() <= 0.15 + 1e-9, "seed z {} outside slab", s.z);
        }
        // A band tighter than the center-to-plane gap rejects the slab.
        let tight = UpsampleParams {
            voxel_edge: Some(0.2),
            seed_band: Some(0.05),
            ..Default::default()
        };
        assert!(sample_seeds(&c, &tight).unwrap().is_empty());
    }

    #[test]
    fn seeds_near_sphere_surface() {
        let c = sphere_cloud(2000);
        let params = UpsampleParams {
            voxel_edge: Some(0.1),
            seed_band: Some(0.05),
            ..Default::default()
        };
        let seeds = sample_seeds(&c, &params).unwrap();
        assert!(!seeds.is_empty());
        for s in &seeds {
            assert!(
                (s.norm() - 1.0).abs() <= 0.06,
                "seed {} off surface",
                s.norm()
            );
        }
    }

    #[test]
    fn zero_band_yields_almost_no_seeds() {
        let c = sphere_cloud(200);
        let params = UpsampleParams {
            voxel_edge: Some(0.15),
            seed_band: Some(0.0),
            ..Default::default()
        };
        let seeds = sample_seeds(&c, &params).unwrap();
        assert!(seeds.len() <= 2, "band 0 kept {} seeds", seeds.len());
    }

    #[test]
    fn seeds_too_few_points() {
        let c = PointCloud::from_points(vec![Vec3::zeros(), Vec3::x()]).unwrap();
        assert!(matches!(
            sample_seeds(&c, &UpsampleParams::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn projection_lands_on_plane() {
        let c = grid_cloud(12, 0.1);
        let params = UpsampleParams {
            k_plane: Some(8),
            ..Default::default()
        };
        let seeds = vec![Vec3::new(0.3, 0.3, 0.2)];
        let out = project_seeds(&c, &seeds, &params).unwrap();
        assert_eq!(out.len(), 1);
        let p = &out[0];
        assert!((p.projected - Vec3::new(0.3, 0.3, 0.0)).norm() < 1e-6);
        assert!((p.projected - (p.seed + p.direction * p.distance)).norm() < 1e-9);
        assert!(p.distance <= 0.0);
    }

    #[test]
    fn projection_of_on_plane_seed_is_identity() {
        let c = grid_cloud(12, 0.1);
        let params = UpsampleParams {
            k_plane: Some(8),
            ..Default::default()
        };
        let seeds = vec![Vec3::new(0.55, 0.55, 0.0)];
        let out = project_seeds(&c, &seeds, &params).unwrap();
        assert!((out[0].projected - seeds[0]).norm() < 1e-9);
        assert!(out[0].distance.abs() < 1e-9);
    }

    #[test]
    fn projection_residuals_vanish() {
        let c = sphere_cloud(500);
        let params = UpsampleParams::default();
        let seeds = sample_seeds(&c, &params).unwrap();
        let index = SpatialIndex::build(&c).unwrap();
        for p in project_seeds(&c, &seeds, &params).unwrap() {
            // Recompute the plane the projection used and check residual.
            let nn = index
                .knn(p.seed.as_slice(), params.resolved_k_plane(c.len()))
                .unwrap();
            let pts: Vec<Vec3> = nn.iter().map(|&(i, _)| c.points()[i]).collect();
            let plane = fit_plane(&pts).unwrap();
            assert!(plane.signed_distance(&p.projected).abs() < 1e-6);
        }
    }

    fn grid_projections(side: usize, spacing: f64) -> Vec<SeedProjection> {
        (0..side)
            .flat_map(|i| {
                (0..side).map(move |j| {
                    let p = Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0);
                    SeedProjection {
                        seed: p,
                        projected: p,
                        direction: Vec3::z(),
                        distance: 0.0,
                        bias: 0.0,
                    }
                })
            })
            .collect()
    }

    #[test]
    fn uniform_grid_keeps_everything() {
        let proj = grid_projections(10, 0.1);
        let kept = remove_outliers(&proj, &UpsampleParams::default()).unwrap();
        assert_eq!(kept.len(), proj.len());
    }

    #[test]
    fn planted_outlier_is_removed() {
        let mut proj = grid_projections(10, 0.1);
        let far = Vec3::new(10.0, 10.0, 10.0);
        proj.push(SeedProjection {
            seed: far,
            projected: far,
            direction: Vec3::z(),
            distance: 0.0,
            bias: 0.0,
        });
        let kept = remove_outliers(&proj, &UpsampleParams::default()).unwrap();
        assert_eq!(kept.len(), 100);
        assert!(kept.iter().all(|p| p.projected != far));
    }

    #[test]
    fn outlier_filter_matches_naive_recomputation() {
        let mut proj = grid_projections(6, 0.13);
        proj.push(SeedProjection {
            seed: Vec3::new(3.0, -2.0, 1.0),
            projected: Vec3::new(3.0, -2.0, 1.0),
            direction: Vec3::z(),
            distance: 0.0,
            bias: 0.0,
        });
        let params = UpsampleParams::default();
        let kept = remove_outliers(&proj, &params).unwrap();

        // Naive recomputation of the predicate set.
        let k = params.k_bias.min(proj.len() - 1);
        let biases: Vec<f64> = (0..proj.len())
            .map(|i| {
                let mut d: Vec<f64> = (0..proj.len())
                    .filter(|&j| j != i)
                    .map(|j| (proj[i].projected - proj[j].projected).norm())
                    .collect();
                d.sort_by(f64::total_cmp);
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect();
        let mean = biases.iter().sum::<f64>() / biases.len() as f64;
        let want: Vec<Vec3> = proj
            .iter()
            .zip(&biases)
            .filter(|(_, &b)| b <= params.outlier_factor * mean)
            .map(|(p, _)| p.projected)
            .collect();
        let got: Vec<Vec3> = kept.iter().map(|p| p.projected).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn single_projection_kept_with_zero_bias() {
        let proj = grid_projections(1, 1.0);
        let kept = remove_outliers(&proj, &UpsampleParams::default()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bias, 0.0);
    }

    #[test]
    fn tiny_factor_falls_back_to_keeping_all() {
        let proj = grid_projections(5, 0.1);
        let params = UpsampleParams {
            outlier_factor: 1e-9,
            ..Default::default()
        };
        let kept = remove_outliers(&proj, &params).unwrap();
        assert_eq!(kept.len(), proj.len());
    }

    #[test]
    fn upsample_sphere_hits_target_and_surface() {
        let c = sphere_cloud(512);
        let out = upsample(&c, &UpsampleParams::default(), None).unwrap();
        assert_eq!(out.len(), 2048);
        let close = out
            .points()
            .iter()
            .filter(|p| (p.norm() - 1.0).abs() <= 0.05)
            .count();
        assert!(
            close as f64 >= 0.99 * out.len() as f64,
            "{close}/{} points near surface",
            out.len()
        );
    }

    #[test]
    fn upsample_same_count_stays_near_surface() {
        let c = sphere_cloud(512);
        let out = upsample(&c, &UpsampleParams::default(), Some(512)).unwrap();
        assert_eq!(out.len(), 512);
        for p in out.points() {
            assert!((p.norm() - 1.0).abs() <= 0.06);
        }
    }

    #[test]
    fn upsample_insufficient_density() {
        let c = sphere_cloud(64);
        let params = UpsampleParams {
            seed_band: Some(1e-9),
            include_original: false,
            ..Default::default()
        };
        assert!(matches!(
            upsample(&c, &params, None),
            Err(Error::InsufficientDensity { .. })
        ));
    }

    #[test]
    fn upsample_output_is_subset_of_dense() {
        let c = sphere_cloud(256);
        let params = UpsampleParams::default();
        let dense = upsample_dense(&c, &params).unwrap();
        let out = upsample(&c, &params, Some(300)).unwrap();
        for p in out.points() {
            assert!(dense.contains(p));
        }
    }

    #[test]
    fn make_augmentations_empty_m() {
        let c = sphere_cloud(32);
        let plan = AugmentPlan {
            method: AugmentMethod::IdentityCopy,
            samples_m: 0,
            master_seed: 1,
        };
        let set = make_augmentations(&c, &plan).unwrap();
        assert!(set.augmented.is_empty());
        assert_eq!(set.sample_count(), 0);
    }

    #[test]
    fn make_augmentations_identity_copies() {
        let c = sphere_cloud(32);
        let plan = AugmentPlan {
            method: AugmentMethod::IdentityCopy,
            samples_m: 3,
            master_seed: 1,
        };
        let set = make_augmentations(&c, &plan).unwrap();
        assert_eq!(set.augmented.len(), 3);
        for a in &set.augmented {
            assert_eq!(a, &c);
        }
    }

    #[test]
    fn make_augmentations_upsample_pairwise_distinct() {
        let c = sphere_cloud(256);
        let plan = AugmentPlan {
            method: AugmentMethod::Upsample(UpsampleParams::default()),
            samples_m: 10,
            master_seed: 42,
        };
        let set = make_augmentations(&c, &plan).unwrap();
        assert_eq!(set.augmented.len(), 10);
        for a in &set.augmented {
            assert_eq!(a.len(), c.len());
        }
        for i in 0..10 {
            for j in (i + 1)..10 {
                assert_ne!(
                    set.augmented[i], set.augmented[j],
                    "clouds {i} and {j} equal"
                );
            }
        }
        // Seeds are pairwise distinct by construction.
        let mut seeds = set.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
    }

    #[test]
    fn make_augmentations_deterministic() {
        let c = sphere_cloud(128);
        let plan = AugmentPlan {
            method: AugmentMethod::Jitter { sigma: 0.05 },
            samples_m: 4,
            master_seed: 7,
        };
        let a = make_augmentations(&c, &plan).unwrap();
        let b = make_augmentations(&c, &plan).unwrap();
        assert_eq!(a.augmented, b.augmented);
        assert_eq!(a.seeds, b.seeds);
    }
}
