//! Whitespace-separated text clouds: `x y z [nx ny nz]` per line, `#` starts
//! a comment. The first data line fixes the column count for the file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

pub fn read(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut arity: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), lineno + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match arity {
            None => {
                if tokens.len() != 3 && tokens.len() != 6 {
                    return Err(Error::parse(
                        loc(),
                        format!("expected 3 or 6 columns, got {}", tokens.len()),
                    ));
                }
                arity = Some(tokens.len());
            }
            Some(a) if tokens.len() != a => {
                return Err(Error::parse(
                    loc(),
                    format!(
                        "expected {a} columns (set by first data line), got {}",
                        tokens.len()
                    ),
                ));
            }
            _ => {}
        }
        let mut values = [0.0f64; 6];
        for (i, t) in tokens.iter().enumerate() {
            values[i] = t
                .parse()
                .map_err(|_| Error::parse(loc(), format!("'{t}' is not a number")))?;
        }
        points.push(Vec3::new(values[0], values[1], values[2]));
        if tokens.len() == 6 {
            let mut n = Vec3::new(values[3], values[4], values[5]);
            let len = n.norm();
            if len <= 1e-9 || !len.is_finite() {
                return Err(Error::parse(loc(), "normal has zero or non-finite length"));
            }
            n /= len;
            normals.push(n);
        }
    }
    let normals = if arity == Some(6) {
        Some(normals)
    } else {
        None
    };
    PointCloud::new(points, normals)
}

pub fn write(cloud: &PointCloud, path: &Path) -> Result<()> {
    // 9 fractional digits keeps the text round-trip error under 1e-6.
    let mut out = String::with_capacity(cloud.len() * 36);
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                out.push_str(&format!(
                    "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
                    p.x, p.y, p.z, n.x, n.y, n.z
                ));
            }
        }
        None => {
            for p in cloud.points() {
                out.push_str(&format!("{:.9} {:.9} {:.9}\n", p.x, p.y, p.z));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
