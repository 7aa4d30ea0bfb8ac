//! PLY reader/writer covering the practical subset: ascii and
//! binary-little-endian, vertex properties x/y/z with optional nx/ny/nz
//! (other scalar properties are skipped), and one face list property.
//! Big-endian files are rejected as unsupported.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => LittleEndian::read_i16(bytes) as f64,
            ScalarType::U16 => LittleEndian::read_u16(bytes) as f64,
            ScalarType::I32 => LittleEndian::read_i32(bytes) as f64,
            ScalarType::U32 => LittleEndian::read_u32(bytes) as f64,
            ScalarType::F32 => LittleEndian::read_f32(bytes) as f64,
            ScalarType::F64 => LittleEndian::read_f64(bytes),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: ScalarType,
    },
    List {
        name: String,
        count_ty: ScalarType,
        elem_ty: ScalarType,
    },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_start: usize,
    header_lines: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let next_line = |pos: &mut usize, lineno: &mut usize| -> Result<String> {
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        if *pos >= bytes.len() {
            return Err(Error::parse(loc(*lineno + 1), "unterminated header"));
        }
        let line = String::from_utf8_lossy(&bytes[start..*pos])
            .trim_end_matches('\r')
            .to_string();
        *pos += 1;
        *lineno += 1;
        Ok(line)
    };

    let magic = next_line(&mut pos, &mut lineno)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(loc(1), "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line(&mut pos, &mut lineno)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                format = Some(match tokens.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some("binary_big_endian") => {
                        return Err(Error::UnsupportedFormat(
                            "big-endian PLY is not supported".into(),
                        ))
                    }
                    other => {
                        return Err(Error::parse(
                            loc(lineno),
                            format!("unknown format '{}'", other.unwrap_or("")),
                        ))
                    }
                });
            }
            Some("element") => {
                let name = tokens
                    .get(1)
                    .ok_or_else(|| Error::parse(loc(lineno), "element needs a name"))?;
                let count: usize = tokens
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(loc(lineno), "element needs a count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(loc(lineno), "property before any element"))?;
                if tokens.get(1).copied() == Some("list") {
                    let count_ty = tokens
                        .get(2)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(loc(lineno), "bad list count type"))?;
                    let elem_ty = tokens
                        .get(3)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(loc(lineno), "bad list element type"))?;
                    let name = tokens
                        .get(4)
                        .ok_or_else(|| Error::parse(loc(lineno), "list property needs a name"))?;
                    element.properties.push(Property::List {
                        name: name.to_string(),
                        count_ty,
                        elem_ty,
                    });
                } else {
                    let ty = tokens
                        .get(1)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(loc(lineno), "unknown property type"))?;
                    let name = tokens
                        .get(2)
                        .ok_or_else(|| Error::parse(loc(lineno), "property needs a name"))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(
                    loc(lineno),
                    format!("unknown keyword '{other}'"),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| Error::parse(loc(lineno), "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_start: pos,
        header_lines: lineno,
    })
}

/// Parsed element data: scalar values per property name plus list contents.
#[derive(Default)]
struct ElementData {
    scalars: Vec<(String, Vec<f64>)>,
    lists: Vec<(String, Vec<Vec<i64>>)>,
}

impl ElementData {
    fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    fn list(&self, name: &str) -> Option<&[Vec<i64>]> {
        self.lists
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

fn read_elements(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<ElementData>> {
    match header.format {
        Format::Ascii => read_ascii(path, bytes, header),
        Format::BinaryLe => read_binary(path, bytes, header),
    }
}

fn read_ascii(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<ElementData>> {
    let body = std::str::from_utf8(&bytes[header.body_start..])
        .map_err(|_| Error::parse(path.display().to_string(), "ascii body is not utf-8"))?;
    let mut lines = body.lines();
    let mut lineno = header.header_lines;
    let mut out = Vec::new();
    for element in &header.elements {
        let mut data = element_storage(element);
        for _ in 0..element.count {
            lineno += 1;
            let loc = format!("{}:{}", path.display(), lineno);
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(loc.clone(), "unexpected end of file"))?;
            let mut tokens = line.split_whitespace();
            let mut next_value = |what: &str| -> Result<f64> {
                tokens
                    .next()
                    .ok_or_else(|| Error::parse(loc.clone(), format!("missing {what}")))?
                    .parse::<f64>()
                    .map_err(|_| Error::parse(loc.clone(), format!("{what} is not a number")))
            };
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { .. } => {
                        let v = next_value("scalar value")?;
                        data.scalars[pi].1.push(v);
                    }
                    Property::List { .. } => {
                        let count = next_value("list count")? as usize;
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            items.push(next_value("list item")? as i64);
                        }
                        data.lists
                            .iter_mut()
                            .find(|(n, _)| matches!(prop, Property::List { name, .. } if n == name))
                            .expect("storage exists")
                            .1
                            .push(items);
                    }
                }
            }
        }
        out.push(data);
    }
    Ok(out)
}

fn read_binary(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<ElementData>> {
    let mut pos = header.body_start;
    let loc = |pos: usize| format!("{} (byte {})", path.display(), pos);
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::parse(loc(*pos), "unexpected end of file"));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };
    let mut out = Vec::new();
    for element in &header.elements {
        let mut data = element_storage(element);
        for _ in 0..element.count {
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = ty.read_le(take(&mut pos, ty.size())?);
                        data.scalars[pi].1.push(v);
                    }
                    Property::List {
                        name,
                        count_ty,
                        elem_ty,
                    } => {
                        let count = count_ty.read_le(take(&mut pos, count_ty.size())?) as usize;
                        if count > 1_000_000 {
                            return Err(Error::parse(loc(pos), "implausible list length"));
                        }
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            items.push(elem_ty.read_le(take(&mut pos, elem_ty.size())?) as i64);
                        }
                        data.lists
                            .iter_mut()
                            .find(|(n, _)| n == name)
                            .expect("storage exists")
                            .1
                            .push(items);
                    }
                }
            }
        }
        out.push(data);
    }
    Ok(out)
}

fn element_storage(element: &Element) -> ElementData {
    let mut data = ElementData::default();
    for prop in &element.properties {
        match prop {
            Property::Scalar { name, .. } => data.scalars.push((name.clone(), Vec::new())),
            Property::List { name, .. } => {
                // Keep scalar slots aligned with property indices.
                data.scalars.push((name.clone(), Vec::new()));
                data.lists.push((name.clone(), Vec::new()));
            }
        }
    }
    data
}

fn extract_cloud(path: &Path, header: &Header, data: &[ElementData]) -> Result<PointCloud> {
    let loc = path.display().to_string();
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(loc.clone(), "no vertex element"))?;
    let vertex = &data[vi];
    let axis = |name: &str| -> Result<&[f64]> {
        vertex
            .scalar(name)
            .filter(|v| v.len() == header.elements[vi].count)
            .ok_or_else(|| Error::parse(loc.clone(), format!("missing vertex property '{name}'")))
    };
    let (x, y, z) = (axis("x")?, axis("y")?, axis("z")?);
    let points: Vec<Vec3> = (0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect();

    let has = |name: &str| vertex.scalar(name).is_some_and(|v| v.len() == points.len());
    let normals = match (has("nx"), has("ny"), has("nz")) {
        (true, true, true) => {
            let (nx, ny, nz) = (axis("nx")?, axis("ny")?, axis("nz")?);
            let mut out = Vec::with_capacity(points.len());
            for i in 0..points.len() {
                let mut n = Vec3::new(nx[i], ny[i], nz[i]);
                let len = n.norm();
                if len <= 1e-9 || !len.is_finite() {
                    return Err(Error::parse(
                        loc.clone(),
                        format!("vertex {i} normal has zero or non-finite length"),
                    ));
                }
                n /= len;
                out.push(n);
            }
            Some(out)
        }
        (false, false, false) => None,
        _ => {
            return Err(Error::parse(
                loc,
                "partial normals: provide all of nx, ny, nz or none",
            ))
        }
    };
    PointCloud::new(points, normals)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    let header = parse_header(path, &bytes)?;
    let data = read_elements(path, &bytes, &header)?;
    extract_cloud(path, &header, &data)
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = std::fs::read(path)?;
    let header = parse_header(path, &bytes)?;
    let data = read_elements(path, &bytes, &header)?;
    let cloud = extract_cloud(path, &header, &data)?;
    let loc = path.display().to_string();

    let mut faces: Vec<[usize; 3]> = Vec::new();
    if let Some(fi) = header.elements.iter().position(|e| e.name == "face") {
        let lists = data[fi]
            .list("vertex_indices")
            .or_else(|| data[fi].list("vertex_index"))
            .ok_or_else(|| Error::parse(loc.clone(), "face element has no vertex index list"))?;
        for (row, indices) in lists.iter().enumerate() {
            if indices.len() < 3 {
                return Err(Error::parse(
                    loc.clone(),
                    format!("face {row} has {} vertices", indices.len()),
                ));
            }
            if indices.iter().any(|&i| i < 0) {
                return Err(Error::parse(
                    loc.clone(),
                    format!("face {row} has a negative index"),
                ));
            }
            // Fan triangulation for polygons.
            for t in 1..indices.len() - 1 {
                faces.push([
                    indices[0] as usize,
                    indices[t] as usize,
                    indices[t + 1] as usize,
                ]);
            }
        }
    }
    TriangleMesh::new(cloud.points().to_vec(), faces)
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, binary: bool) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let format = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    out.extend_from_slice(
        format!("ply\nformat {format} 1.0\nelement vertex {}\n", cloud.len()).as_bytes(),
    );
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        out.extend_from_slice(b"property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.extend_from_slice(b"end_header\n");
    let values = |p: &Vec3, n: Option<&Vec3>| {
        let mut v = vec![p.x, p.y, p.z];
        if let Some(n) = n {
            v.extend_from_slice(&[n.x, n.y, n.z]);
        }
        v
    };
    for (i, p) in cloud.points().iter().enumerate() {
        let n = cloud.normals().map(|ns| &ns[i]);
        let row = values(p, n);
        if binary {
            for v in row {
                let mut buf = [0u8; 8];
                LittleEndian::write_f64(&mut buf, v);
                out.extend_from_slice(&buf);
            }
        } else {
            let text: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.extend_from_slice(text.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
