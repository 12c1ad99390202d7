//! Point cloud files: XYZ text and PLY (ASCII and binary little-endian).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointSet, TriMesh, Vec3};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Whitespace-separated rows of 3 (position) or 6 (position, normal)
/// numbers. `#` starts a comment.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointSet> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let vals = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| parse_error(path, line, format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.is_empty() {
            continue;
        }
        if vals.len() != 3 && vals.len() != 6 {
            return Err(parse_error(path, line, format!("expected 3 or 6 columns, found {}", vals.len())));
        }
        match columns {
            None => columns = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(parse_error(path, line, format!("column count changed from {c} to {}", vals.len())));
            }
            _ => {}
        }
        positions.push([vals[0], vals[1], vals[2]]);
        if vals.len() == 6 {
            normals.push([vals[3], vals[4], vals[5]]);
        }
    }
    if positions.is_empty() {
        return Err(parse_error(path, 0, "no points"));
    }
    if normals.is_empty() {
        PointSet::new(positions)
    } else {
        PointSet::with_normals_renormalized(positions, normals)
    }
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    parse_xyz(&fs::read_to_string(path)?, path)
}

pub fn write_xyz(ps: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    for (i, p) in ps.positions().iter().enumerate() {
        match ps.normals() {
            Some(n) => {
                let n = n[i];
                writeln!(w, "{:e} {:e} {:e} {:e} {:e} {:e}", p[0], p[1], p[2], n[0], n[1], n[2])?
            }
            None => writeln!(w, "{:e} {:e} {:e}", p[0], p[1], p[2])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Contents of a PLY file relevant here.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<Vec<usize>>,
}

/// Value source for one element row: ASCII tokens or little-endian bytes.
enum Body<'a> {
    Ascii { tokens: std::str::SplitAsciiWhitespace<'a> },
    Binary { bytes: &'a [u8], pos: usize },
}

impl Body<'_> {
    fn next(&mut self, ty: Scalar, path: &Path) -> Result<f64> {
        match self {
            Body::Ascii { tokens } => {
                let tok = tokens.next().ok_or_else(|| parse_error(path, 0, "unexpected end of ascii data"))?;
                tok.parse().map_err(|_| parse_error(path, 0, format!("bad number `{tok}`")))
            }
            Body::Binary { bytes, pos } => {
                let n = ty.size();
                let b = bytes.get(*pos..*pos + n).ok_or_else(|| parse_error(path, 0, "unexpected end of binary data"))?;
                *pos += n;
                Ok(ty.decode(b))
            }
        }
    }
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PlyData> {
    let mut elements: Vec<Element> = Vec::new();
    let mut binary = None;
    let mut offset = 0;
    let mut line_no = 0;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_error(path, line_no, "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| parse_error(path, line_no + 1, "header is not text"))?
            .trim();
        offset += end + 1;
        line_no += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(parse_error(path, 1, "missing `ply` magic")),
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(parse_error(path, line_no, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_error(path, line_no, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_error(path, line_no, "property before element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(parse_error(path, line_no, "unknown list type"));
                };
                el.properties.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_error(path, line_no, "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_error(path, line_no, format!("unknown type `{ty}`")))?;
                el.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            ["end_header"] => break,
            _ => return Err(parse_error(path, line_no, format!("unrecognized header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_error(path, line_no, "missing format line"))?;
    let rest = &bytes[offset..];
    let mut body = if binary {
        Body::Binary { bytes: rest, pos: 0 }
    } else {
        let text = std::str::from_utf8(rest).map_err(|_| parse_error(path, line_no, "ascii body is not text"))?;
        Body::Ascii { tokens: text.split_ascii_whitespace() }
    };

    let mut out = PlyData::default();
    for el in &elements {
        let find = |n: &str| {
            el.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let xyz = [find("x"), find("y"), find("z")];
        let nrm = [find("nx"), find("ny"), find("nz")];
        let rgb = [find("red"), find("green"), find("blue")];
        let mut row = vec![0.0; el.properties.len()];
        let mut normals = Vec::new();
        let mut colors = Vec::new();
        for _ in 0..el.count {
            let mut lists = Vec::new();
            for (k, p) in el.properties.iter().enumerate() {
                match p {
                    Property::Scalar { ty, .. } => row[k] = body.next(*ty, path)?,
                    Property::List { name, count, item } => {
                        let n = body.next(*count, path)?;
                        if !(n >= 0.0) || n.fract() != 0.0 {
                            return Err(parse_error(path, 0, "bad list length"));
                        }
                        let mut items = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            items.push(body.next(*item, path)?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            lists = items;
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let [Some(x), Some(y), Some(z)] = xyz else {
                        return Err(parse_error(path, 0, "vertex element lacks x, y or z"));
                    };
                    out.positions.push([row[x], row[y], row[z]]);
                    if let [Some(a), Some(b), Some(c)] = nrm {
                        normals.push([row[a], row[b], row[c]]);
                    }
                    if let [Some(r), Some(g), Some(b)] = rgb {
                        colors.push([row[r] as u8, row[g] as u8, row[b] as u8]);
                    }
                }
                "face" => {
                    let face = lists
                        .iter()
                        .map(|&v| {
                            if v >= 0.0 && v.fract() == 0.0 {
                                Ok(v as usize)
                            } else {
                                Err(parse_error(path, 0, format!("bad face index {v}")))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    out.faces.push(face);
                }
                _ => {}
            }
        }
        if el.name == "vertex" {
            out.normals = (!normals.is_empty()).then_some(normals);
            out.colors = (!colors.is_empty()).then_some(colors);
        }
    }
    Ok(out)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    parse_ply(&fs::read(path)?, path)
}

impl PlyData {
    pub fn to_point_set(&self) -> Result<PointSet> {
        match &self.normals {
            Some(n) => PointSet::with_normals_renormalized(self.positions.clone(), n.clone()),
            None => PointSet::new(self.positions.clone()),
        }
    }

    /// Fan-triangulated mesh of the face element.
    pub fn to_mesh(&self) -> Result<TriMesh> {
        let mut faces = Vec::new();
        for f in &self.faces {
            if f.len() < 3 {
                return Err(Error::InvalidArgument("ply face with fewer than three vertices".into()));
            }
            for i in 1..f.len() - 1 {
                faces.push([f[0], f[i], f[i + 1]]);
            }
        }
        let mesh = TriMesh::new(self.positions.clone(), faces)?;
        match &self.normals {
            Some(n) => mesh.with_normals(n.clone()),
            None => Ok(mesh),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Writes a vertex-only PLY with optional normals and colors (doubles for
/// coordinates, uchar for colors).
pub fn write_ply(
    path: impl AsRef<Path>,
    positions: &[Vec3],
    normals: Option<&[Vec3]>,
    colors: Option<&[[u8; 3]]>,
    format: PlyFormat,
) -> Result<()> {
    let n = positions.len();
    if normals.is_some_and(|v| v.len() != n) || colors.is_some_and(|v| v.len() != n) {
        return Err(Error::Shape("per-vertex attribute count differs from vertex count".into()));
    }
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {n}")?;
    for a in ["x", "y", "z"] {
        writeln!(w, "property double {a}")?;
    }
    if normals.is_some() {
        for a in ["nx", "ny", "nz"] {
            writeln!(w, "property double {a}")?;
        }
    }
    if colors.is_some() {
        for a in ["red", "green", "blue"] {
            writeln!(w, "property uchar {a}")?;
        }
    }
    writeln!(w, "end_header")?;
    for i in 0..n {
        let mut vals: Vec<f64> = positions[i].to_vec();
        if let Some(nm) = normals {
            vals.extend(nm[i]);
        }
        match format {
            PlyFormat::Ascii => {
                let mut fields: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
                if let Some(c) = colors {
                    fields.extend(c[i].iter().map(|b| b.to_string()));
                }
                writeln!(w, "{}", fields.join(" "))?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in vals {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = colors {
                    w.write_all(&c[i])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a point cloud by extension: `.ply`, `.obj` (vertices only), or XYZ text.
pub fn load_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ply" => load_ply(path)?.to_point_set(),
        "obj" => super::obj::load_obj(path)?.to_point_set(),
        _ => load_xyz(path),
    }
}

pub(crate) fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}
