//! ASCII PLY reading and writing for point clouds.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::VoxelCloud;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlyError {
    #[error("not a PLY file (missing `ply` magic line)")]
    MissingMagic,
    #[error("unsupported PLY format `{0}`; only ascii 1.0 is read")]
    UnsupportedFormat(String),
    #[error("PLY header has no `end_header` line")]
    MissingEndHeader,
    #[error("PLY header declares no vertex element")]
    MissingVertexElement,
    #[error("vertex element lacks coordinate `{0}`")]
    MissingCoordinate(char),
    #[error("unsupported property declaration `{0}`")]
    UnsupportedProperty(String),
    #[error("malformed header line {line}: `{text}`")]
    BadHeader { line: usize, text: String },
    #[error("malformed value on line {line}: `{text}`")]
    BadValue { line: usize, text: String },
    #[error("expected {expected} vertices, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Points parsed from a PLY file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyPoints {
    pub points: Vec<[f64; 3]>,
    /// Whether all coordinates were declared with integer types.
    pub integer: bool,
    /// Value of a `comment bit_depth N` header line, if present.
    pub bit_depth: Option<u8>,
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, bool)>,
    has_list: bool,
}

fn scalar_is_integer(ty: &str) -> Option<bool> {
    match ty {
        "char" | "uchar" | "short" | "ushort" | "int" | "uint" | "int8" | "uint8" | "int16"
        | "uint16" | "int32" | "uint32" => Some(true),
        "float" | "double" | "float32" | "float64" => Some(false),
        _ => None,
    }
}

pub fn parse_ply(text: &str) -> Result<PlyPoints, PlyError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(PlyError::MissingMagic),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut bit_depth = None;
    let mut ended = false;
    for (i, raw) in lines.by_ref() {
        let line = raw.trim();
        let mut tok = line.split_whitespace();
        let bad = || PlyError::BadHeader { line: i + 1, text: raw.to_string() };
        match tok.next() {
            None => continue,
            Some("format") => {
                let fmt = tok.collect::<Vec<_>>().join(" ");
                if fmt != "ascii 1.0" {
                    return Err(PlyError::UnsupportedFormat(fmt));
                }
            }
            Some("comment") | Some("obj_info") => {
                if tok.next() == Some("bit_depth") {
                    bit_depth = tok.next().and_then(|t| t.parse().ok());
                }
            }
            Some("element") => {
                let name = tok.next().ok_or_else(bad)?.to_string();
                let count = tok.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                elements.push(Element { name, count, props: Vec::new(), has_list: false });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(bad)?;
                let ty = tok.next().ok_or_else(bad)?;
                if ty == "list" {
                    el.has_list = true;
                    continue;
                }
                let is_int = scalar_is_integer(ty)
                    .ok_or_else(|| PlyError::UnsupportedProperty(line.to_string()))?;
                let name = tok.next().ok_or_else(bad)?.to_string();
                el.props.push((name, is_int));
            }
            Some("end_header") => {
                ended = true;
                break;
            }
            Some(_) => return Err(bad()),
        }
    }
    if !ended {
        return Err(PlyError::MissingEndHeader);
    }

    let mut points = Vec::new();
    let mut integer = true;
    let mut have_vertex = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                if lines.next().is_none() {
                    return Err(PlyError::Truncated { expected: el.count, found: 0 });
                }
            }
            continue;
        }
        if el.has_list {
            return Err(PlyError::UnsupportedProperty("list property on vertex".into()));
        }
        have_vertex = true;
        let mut cols = [0usize; 3];
        for (slot, axis) in cols.iter_mut().zip(['x', 'y', 'z']) {
            let pos = el
                .props
                .iter()
                .position(|(n, _)| n.len() == 1 && n.starts_with(axis))
                .ok_or(PlyError::MissingCoordinate(axis))?;
            integer &= el.props[pos].1;
            *slot = pos;
        }
        points.reserve(el.count);
        for found in 0..el.count {
            let (i, raw) = lines
                .next()
                .ok_or(PlyError::Truncated { expected: el.count, found })?;
            let vals: Vec<&str> = raw.split_whitespace().collect();
            if vals.len() < el.props.len() {
                return Err(PlyError::BadValue { line: i + 1, text: raw.to_string() });
            }
            let mut p = [0.0; 3];
            for (dst, &c) in p.iter_mut().zip(&cols) {
                *dst = vals[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| PlyError::BadValue { line: i + 1, text: raw.to_string() })?;
            }
            points.push(p);
        }
    }
    if !have_vertex {
        return Err(PlyError::MissingVertexElement);
    }
    Ok(PlyPoints { points, integer, bit_depth })
}

pub fn read_ply(path: impl AsRef<Path>) -> crate::Result<PlyPoints> {
    let text = fs::read_to_string(path)?;
    Ok(parse_ply(&text)?)
}

/// Serialize voxels as ASCII PLY with integer coordinates.
pub fn ply_string(cloud: &VoxelCloud) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(32 + cloud.len() * 16);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment bit_depth {}", cloud.bit_depth());
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property int x\nproperty int y\nproperty int z\nend_header\n");
    for [x, y, z] in cloud.voxels() {
        let _ = writeln!(s, "{x} {y} {z}");
    }
    s
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &VoxelCloud) -> crate::Result<()> {
    fs::write(path, ply_string(cloud))?;
    Ok(())
}

/// Load a PLY file as voxels.
///
/// Integer coordinates are taken as voxel positions on a grid of `bit_depth`
/// bits (or the file's `bit_depth` comment, or the smallest depth that fits).
/// Float coordinates are voxelized and require an explicit `bit_depth`.
pub fn read_cloud(path: impl AsRef<Path>, bit_depth: Option<u8>) -> crate::Result<VoxelCloud> {
    points_to_cloud(&read_ply(path)?, bit_depth)
}

pub fn points_to_cloud(ply: &PlyPoints, bit_depth: Option<u8>) -> crate::Result<VoxelCloud> {
    if ply.integer {
        let mut voxels = Vec::with_capacity(ply.points.len());
        let mut max = 0.0f64;
        for p in &ply.points {
            if p.iter().any(|&c| c < 0.0 || c.fract() != 0.0 || c >= (1u64 << 21) as f64) {
                return Err(crate::Error::InvalidInput(format!(
                    "integer coordinate {p:?} is not a valid voxel position"
                )));
            }
            max = p.iter().fold(max, |m, &c| m.max(c));
            voxels.push([p[0] as u32, p[1] as u32, p[2] as u32]);
        }
        let fitted = (64 - (max as u64).leading_zeros()).max(1) as u8;
        let n = bit_depth.or(ply.bit_depth).unwrap_or(fitted);
        VoxelCloud::new(n, voxels)
    } else {
        let n = bit_depth.ok_or_else(|| {
            crate::Error::InvalidInput("float coordinates need an explicit bit depth".into())
        })?;
        super::voxelize(&ply.points, n)
    }
}
