//! Synthetic desk-scale dataset: noisy surface-sampled spheres, cubes, and
//! cylinders with meshes, two-part labels per category, and a manifest.
//!
//! Every byte written is a deterministic function of the seed.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::augment::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::io::{
    write_labels, write_manifest, write_mesh_off, write_point_cloud, CloudFormat, DatasetManifest,
    ManifestEntry, PartSet, Task,
};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Sphere,
    Cube,
    Cylinder,
}

impl ShapeClass {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cube => "cube",
            ShapeClass::Cylinder => "cylinder",
        }
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sphere" => Ok(ShapeClass::Sphere),
            "cube" => Ok(ShapeClass::Cube),
            "cylinder" => Ok(ShapeClass::Cylinder),
            other => Err(Error::InvalidParameter(format!(
                "unknown shape class '{other}' (expected sphere, cube, or cylinder)"
            ))),
        }
    }
}

/// Mesh plus a per-face local part id (0 or 1).
#[derive(Debug, Clone)]
pub struct TaggedMesh {
    pub mesh: TriangleMesh,
    pub face_parts: Vec<usize>,
}

/// Canonical unit-scale mesh for a shape class. Parts: sphere splits into
/// lower/upper hemispheres, cube into top+bottom faces vs sides, cylinder
/// into caps vs side (caps are part 0).
pub fn shape_mesh(class: ShapeClass) -> TaggedMesh {
    match class {
        ShapeClass::Sphere => sphere_mesh(16, 32),
        ShapeClass::Cube => cube_mesh(),
        ShapeClass::Cylinder => cylinder_mesh(32),
    }
}

fn sphere_mesh(rings: usize, segments: usize) -> TaggedMesh {
    let mut vertices = vec![Vec3::new(0.0, 0.0, 1.0)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    let bottom = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);

    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    let face_parts = faces
        .iter()
        .map(|f| {
            let z = (vertices[f[0]].z + vertices[f[1]].z + vertices[f[2]].z) / 3.0;
            usize::from(z >= 0.0)
        })
        .collect();
    TaggedMesh {
        mesh: TriangleMesh::new(vertices, faces).expect("indices valid"),
        face_parts,
    }
}

fn cube_mesh() -> TaggedMesh {
    let h = 0.5;
    let vertices = vec![
        Vec3::new(-h, -h, -h),
        Vec3::new(h, -h, -h),
        Vec3::new(h, h, -h),
        Vec3::new(-h, h, -h),
        Vec3::new(-h, -h, h),
        Vec3::new(h, -h, h),
        Vec3::new(h, h, h),
        Vec3::new(-h, h, h),
    ];
    // part 0: bottom/top (+-z), part 1: the four sides.
    let faces_with_parts: Vec<([usize; 3], usize)> = vec![
        ([0, 2, 1], 0),
        ([0, 3, 2], 0),
        ([4, 5, 6], 0),
        ([4, 6, 7], 0),
        ([0, 1, 5], 1),
        ([0, 5, 4], 1),
        ([1, 2, 6], 1),
        ([1, 6, 5], 1),
        ([2, 3, 7], 1),
        ([2, 7, 6], 1),
        ([3, 0, 4], 1),
        ([3, 4, 7], 1),
    ];
    let faces = faces_with_parts.iter().map(|(f, _)| *f).collect();
    let face_parts = faces_with_parts.iter().map(|(_, p)| *p).collect();
    TaggedMesh {
        mesh: TriangleMesh::new(vertices, faces).expect("indices valid"),
        face_parts,
    }
}

fn cylinder_mesh(segments: usize) -> TaggedMesh {
    let radius = 0.5;
    let half_h = 0.9;
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for s in 0..segments {
        let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
        vertices.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), half_h));
    }
    for s in 0..segments {
        let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
        vertices.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), -half_h));
    }
    let top_center = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, half_h));
    let bottom_center = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -half_h));

    let top = |s: usize| s % segments;
    let bottom = |s: usize| segments + s % segments;
    let mut faces = Vec::new();
    let mut face_parts = Vec::new();
    for s in 0..segments {
        // caps (part 0)
        faces.push([top_center, top(s), top(s + 1)]);
        face_parts.push(0);
        faces.push([bottom_center, bottom(s + 1), bottom(s)]);
        face_parts.push(0);
        // side (part 1)
        faces.push([top(s), bottom(s), bottom(s + 1)]);
        face_parts.push(1);
        faces.push([top(s), bottom(s + 1), top(s + 1)]);
        face_parts.push(1);
    }
    TaggedMesh {
        mesh: TriangleMesh::new(vertices, faces).expect("indices valid"),
        face_parts,
    }
}

/// Samples `n` points uniformly by area; each point carries its source
/// face's part id. Gaussian noise (if any) is added after labeling.
pub fn sample_tagged_surface(
    tagged: &TaggedMesh,
    n: usize,
    noise: f64,
    rng: &mut ChaCha12Rng,
) -> Result<(PointCloud, Vec<usize>)> {
    let mesh = &tagged.mesh;
    if mesh.face_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if total <= 0.0 || total.is_nan() {
        return Err(Error::InvalidParameter("mesh has zero surface area".into()));
    }
    let mut points = Vec::with_capacity(n);
    let mut parts = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c < target)
            .min(mesh.face_count() - 1);
        let [a, b, c] = mesh.faces[face];
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let su = u.sqrt();
        let (b0, b1, b2) = (1.0 - su, su * (1.0 - v), su * v);
        let mut p = mesh.vertices[a] * b0 + mesh.vertices[b] * b1 + mesh.vertices[c] * b2;
        if noise > 0.0 {
            for axis in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                p[axis] += noise * z;
            }
        }
        points.push(p);
        parts.push(tagged.face_parts[face]);
    }
    Ok((PointCloud::from_points(points)?, parts))
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub classes: Vec<ShapeClass>,
    pub per_class: usize,
    pub points: usize,
    pub noise: f64,
    pub seed: u64,
    pub task: Task,
}

/// Builds the dataset under `out_dir` and returns the manifest path.
/// Per-entry geometry varies through a seeded scale in [0.85, 1.15] per
/// axis (isotropic for spheres). Part labels are globally disjoint: category `c`
/// owns labels `2c` and `2c + 1`.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    if cfg.classes.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one class required".into(),
        ));
    }
    if cfg.per_class == 0 || cfg.points == 0 {
        return Err(Error::InvalidParameter(
            "per_class and points must be >= 1".into(),
        ));
    }
    if cfg.noise < 0.0 || !cfg.noise.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise must be >= 0, got {}",
            cfg.noise
        )));
    }
    std::fs::create_dir_all(out_dir.join("clouds"))?;
    std::fs::create_dir_all(out_dir.join("meshes"))?;
    std::fs::create_dir_all(out_dir.join("labels"))?;

    let mut entries = Vec::with_capacity(cfg.classes.len() * cfg.per_class);
    for (class_idx, class) in cfg.classes.iter().enumerate() {
        let base = shape_mesh(*class);
        for j in 0..cfg.per_class {
            let entry_index = (class_idx * cfg.per_class + j) as u64;
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, entry_index));
            // Spheres stay isotropic (an anisotropic sphere is an ellipsoid,
            // a different shape); boxes and cylinders stretch per axis.
            let scale = if *class == ShapeClass::Sphere {
                let s = 0.85 + 0.3 * rng.random::<f64>();
                Vec3::new(s, s, s)
            } else {
                Vec3::new(
                    0.85 + 0.3 * rng.random::<f64>(),
                    0.85 + 0.3 * rng.random::<f64>(),
                    0.85 + 0.3 * rng.random::<f64>(),
                )
            };
            let mut tagged = base.clone();
            tagged
                .mesh
                .map_vertices(|v| Vec3::new(v.x * scale.x, v.y * scale.y, v.z * scale.z));
            let (cloud, local_parts) =
                sample_tagged_surface(&tagged, cfg.points, cfg.noise, &mut rng)?;
            let labels: Vec<usize> = local_parts.iter().map(|p| 2 * class_idx + p).collect();

            let stem = format!("{}_{j:03}", class.name());
            let cloud_rel = PathBuf::from(format!("clouds/{stem}.xyz"));
            let mesh_rel = PathBuf::from(format!("meshes/{stem}.off"));
            let labels_rel = PathBuf::from(format!("labels/{stem}.txt"));
            write_point_cloud(&cloud, out_dir.join(&cloud_rel), CloudFormat::XyzText)?;
            write_mesh_off(&tagged.mesh, out_dir.join(&mesh_rel))?;
            write_labels(&labels, out_dir.join(&labels_rel))?;
            entries.push(ManifestEntry {
                cloud: cloud_rel,
                mesh: Some(mesh_rel),
                labels: Some(labels_rel),
                class_id: class_idx,
            });
        }
    }

    let manifest = DatasetManifest {
        task: cfg.task,
        classes: cfg.classes.iter().map(|c| c.name().to_string()).collect(),
        part_sets: Some(
            (0..cfg.classes.len())
                .map(|c| PartSet {
                    category: c,
                    parts: vec![2 * c, 2 * c + 1],
                })
                .collect(),
        ),
        entries,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest, &manifest_path)?;
    Ok(manifest_path)
}
