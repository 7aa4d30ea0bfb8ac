//! Test-time augmentation for 3D point clouds.
//!
//! The pipeline generates augmented versions of an input cloud (Gaussian
//! jitter, mesh-vertex sampling, or surface-projection upsampling), runs a
//! pluggable predictor over every version, and aggregates the predictions:
//! global features are averaged for classification, per-point logits are
//! fused through nearest-neighbor correspondences for segmentation.
//!
//! Data-parallel inner loops run on rayon when the default `parallel`
//! feature is enabled and fall back to sequential execution without it;
//! results are bit-identical either way.

pub mod aggregate;
pub mod augment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod metrics;
pub(crate) mod par;
pub mod predict;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{PointCloud, Vec3};
pub use mesh::TriangleMesh;
