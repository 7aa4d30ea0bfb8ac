//! OFF mesh files. Polygons with more than three vertices are
//! fan-triangulated; edges shared by more than two faces only log a warning
//! (non-manifold input is allowed).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

pub fn read(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let loc = |line: usize| format!("{}:{}", path.display(), line);

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let mut counts_tokens: Vec<&str>;
    if let Some(rest) = first.strip_prefix("OFF") {
        counts_tokens = rest.split_whitespace().collect();
        if counts_tokens.is_empty() {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(loc(first_no), "missing counts line"))?;
            counts_tokens = line.split_whitespace().collect();
            if counts_tokens.len() < 2 {
                return Err(Error::parse(loc(no), "expected 'V F E' counts"));
            }
        }
    } else {
        return Err(Error::parse(loc(first_no), "missing OFF header"));
    }
    let parse_count = |t: Option<&&str>, what: &str| -> Result<usize> {
        t.and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(loc(first_no), format!("bad {what} count")))
    };
    let n_vertices = parse_count(counts_tokens.first(), "vertex")?;
    let n_faces = parse_count(counts_tokens.get(1), "face")?;

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path.display().to_string(), "missing vertex lines"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(Error::parse(loc(no), "vertex needs 3 coordinates"));
        }
        let mut coords = [0.0f64; 3];
        for (i, t) in tokens[..3].iter().enumerate() {
            coords[i] = t
                .parse()
                .map_err(|_| Error::parse(loc(no), format!("'{t}' is not a number")))?;
        }
        vertices.push(Vec3::from(coords));
    }

    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path.display().to_string(), "missing face lines"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let arity: usize = tokens
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(loc(no), "face needs a vertex count"))?;
        if arity < 3 || tokens.len() < 1 + arity {
            return Err(Error::parse(loc(no), "face has too few vertex indices"));
        }
        let mut indices = Vec::with_capacity(arity);
        for t in &tokens[1..=arity] {
            let idx: usize = t
                .parse()
                .map_err(|_| Error::parse(loc(no), format!("'{t}' is not an index")))?;
            if idx >= vertices.len() {
                return Err(Error::parse(
                    loc(no),
                    format!(
                        "vertex index {idx} out of range ({} vertices)",
                        vertices.len()
                    ),
                ));
            }
            indices.push(idx);
        }
        for t in 1..arity - 1 {
            faces.push([indices[0], indices[t], indices[t + 1]]);
        }
    }

    warn_if_non_manifold(path, &faces);
    TriangleMesh::new(vertices, faces)
}

fn warn_if_non_manifold(path: &Path, faces: &[[usize; 3]]) {
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = (a.min(b), a.max(b));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let bad = edge_count.values().filter(|&&c| c > 2).count();
    if bad > 0 {
        log::warn!(
            "{}: {bad} edge(s) shared by more than two faces (non-manifold mesh accepted)",
            path.display()
        );
    }
}

pub fn write(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("OFF\n");
    out.push_str(&format!(
        "{} {} 0\n",
        mesh.vertex_count(),
        mesh.face_count()
    ));
    for v in &mesh.vertices {
        out.push_str(&format!("{:.9} {:.9} {:.9}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    std::fs::write(path, out)?;
    Ok(())
}
