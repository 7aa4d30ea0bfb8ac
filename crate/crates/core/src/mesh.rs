//! Triangle mesh container used as the source for surface-sampling
//! augmentation.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(Error::Parse {
                        location: format!("face {fi}"),
                        message: format!(
                            "vertex index {v} out of range ({} vertices)",
                            vertices.len()
                        ),
                    });
                }
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let ab = self.vertices[b] - self.vertices[a];
        let ac = self.vertices[c] - self.vertices[a];
        ab.cross(&ac).norm() / 2.0
    }

    /// Per-vertex unit normals, averaged over incident faces weighted by
    /// area (unnormalized cross products sum to exactly that). Vertices with
    /// no incident surface get a fixed +z placeholder.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = *f;
            let n =
                (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            acc[a] += n;
            acc[b] += n;
            acc[c] += n;
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    Vec3::new(0.0, 0.0, 1.0)
                }
            })
            .collect()
    }

    /// Applies `f` to every vertex in place.
    pub fn map_vertices(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(v);
        }
    }
}
