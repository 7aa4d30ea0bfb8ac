//! File formats: XYZ text and PLY point clouds, OFF/PLY meshes, label
//! lists, and the JSON dataset manifest.
//!
//! Every reader rejects malformed input with a located error; nothing falls
//! back to a silent default. Formats are picked by file extension.

mod manifest;
mod off;
mod ply;
mod xyz;

use std::path::Path;

pub use manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry, PartSet, Task};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesh::TriangleMesh;

/// On-disk point cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Whitespace-separated `x y z [nx ny nz]` per line, `#` comments.
    XyzText,
    PlyAscii,
    /// Binary little-endian PLY with double-precision coordinates
    /// (bit-exact round trips).
    PlyBinary,
}

fn extension_of(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(vec![path.display().to_string()]));
    }
    match extension_of(path).as_str() {
        "xyz" | "txt" => xyz::read(path),
        "ply" => ply::read_cloud(path),
        other => Err(Error::UnsupportedFormat(format!(
            "point cloud extension '{other}' (expected xyz, txt, or ply)"
        ))),
    }
}

pub fn write_point_cloud(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<()> {
    match format {
        CloudFormat::XyzText => xyz::write(cloud, path.as_ref()),
        CloudFormat::PlyAscii => ply::write_cloud(cloud, path.as_ref(), false),
        CloudFormat::PlyBinary => ply::write_cloud(cloud, path.as_ref(), true),
    }
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(vec![path.display().to_string()]));
    }
    match extension_of(path).as_str() {
        "off" => off::read(path),
        "ply" => ply::read_mesh(path),
        other => Err(Error::UnsupportedFormat(format!(
            "mesh extension '{other}' (expected off or ply)"
        ))),
    }
}

pub fn write_mesh_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    off::write(mesh, path.as_ref())
}

/// Reads one nonnegative integer label per line; blank lines are skipped.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(vec![path.display().to_string()]));
    }
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: i64 = line.parse().map_err(|_| {
            Error::parse(
                format!("{}:{}", path.display(), lineno + 1),
                format!("expected an integer label, got '{line}'"),
            )
        })?;
        if value < 0 {
            return Err(Error::parse(
                format!("{}:{}", path.display(), lineno + 1),
                format!("labels are nonnegative, got {value}"),
            ));
        }
        labels.push(value as usize);
    }
    Ok(labels)
}

pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn fixture(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name)
    }

    #[test]
    fn xyz_two_point_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.xyz");
        std::fs::write(&path, "0 0 0\n1 2 3\n").unwrap();
        let cloud = read_point_cloud(&path).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn xyz_comments_and_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.xyz");
        std::fs::write(&path, "# header\n0 0 0 0 0 1\n1 1 1 1 0 0 # trailing\n").unwrap();
        let cloud = read_point_cloud(&path).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.normals().unwrap()[0], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn xyz_bad_token_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        std::fs::write(&path, "0 0 0\n1 oops 3\n").unwrap();
        match read_point_cloud(&path) {
            Err(Error::Parse { location, .. }) => assert!(location.ends_with(":2")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn xyz_round_trip_under_1e6() {
        let cloud = PointCloud::from_points(vec![
            Vec3::new(0.123456789123, -4.5, 1e-3),
            Vec3::new(2.0 / 3.0, 1.0 / 7.0, -0.9999999),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.xyz");
        write_point_cloud(&cloud, &path, CloudFormat::XyzText).unwrap();
        let back = read_point_cloud(&path).unwrap();
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn binary_ply_round_trip_bit_exact() {
        let cloud = PointCloud::new(
            vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.5, 2.5, -3.5)],
            Some(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)]),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.ply");
        write_point_cloud(&cloud, &path, CloudFormat::PlyBinary).unwrap();
        let back = read_point_cloud(&path).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn ascii_ply_cube_fixture() {
        let cloud = read_point_cloud(fixture("cube.ply")).unwrap();
        assert_eq!(cloud.len(), 8);
        assert!(cloud
            .points()
            .iter()
            .any(|p| *p == Vec3::new(-0.5, -0.5, -0.5)));
        assert!(cloud
            .points()
            .iter()
            .any(|p| *p == Vec3::new(0.5, 0.5, 0.5)));
    }

    #[test]
    fn empty_cloud_round_trips() {
        let cloud = PointCloud::from_points(vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [
            ("e.xyz", CloudFormat::XyzText),
            ("e_a.ply", CloudFormat::PlyAscii),
            ("e_b.ply", CloudFormat::PlyBinary),
        ] {
            let path = dir.path().join(name);
            write_point_cloud(&cloud, &path, format).unwrap();
            assert_eq!(read_point_cloud(&path).unwrap().len(), 0);
        }
    }

    #[test]
    fn big_endian_ply_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("be.ply");
        std::fs::write(
            &path,
            "ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        )
        .unwrap();
        assert!(matches!(
            read_point_cloud(&path),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn off_cube_fixture_counts() {
        let mesh = read_mesh(fixture("cube.off")).unwrap();
        assert_eq!(mesh.vertex_count(), 8);
        assert_eq!(mesh.face_count(), 12);
    }

    #[test]
    fn shape_fixtures_load() {
        assert_eq!(read_point_cloud(fixture("sphere.xyz")).unwrap().len(), 64);
        assert_eq!(read_point_cloud(fixture("cylinder.xyz")).unwrap().len(), 48);
        assert_eq!(read_point_cloud(fixture("cube.xyz")).unwrap().len(), 8);
        let sphere = read_mesh(fixture("sphere.off")).unwrap();
        assert_eq!((sphere.vertex_count(), sphere.face_count()), (12, 20));
        for v in &sphere.vertices {
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
        let cylinder = read_mesh(fixture("cylinder.off")).unwrap();
        assert_eq!((cylinder.vertex_count(), cylinder.face_count()), (18, 32));
    }

    #[test]
    fn off_quads_fan_triangulated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.off");
        std::fs::write(&path, "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        let mesh = read_mesh(&path).unwrap();
        assert_eq!(mesh.face_count(), 2);
        assert_eq!(mesh.faces[0], [0, 1, 2]);
        assert_eq!(mesh.faces[1], [0, 2, 3]);
    }

    #[test]
    fn off_face_index_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oob.off");
        std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n").unwrap();
        assert!(matches!(read_mesh(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn ply_mesh_with_faces() {
        let mesh = read_mesh(fixture("tetra.ply")).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 4);
    }

    #[test]
    fn labels_parse_and_reject_negatives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.txt");
        std::fs::write(&path, "0\n1\n1\n\n").unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![0, 1, 1]);
        std::fs::write(&path, "0\n-3\n").unwrap();
        assert!(matches!(read_labels(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.txt");
        write_labels(&[4, 0, 2], &path).unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![4, 0, 2]);
    }

    #[test]
    fn unknown_extension_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.obj");
        std::fs::write(&path, "v 0 0 0\n").unwrap();
        assert!(matches!(
            read_point_cloud(&path),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
