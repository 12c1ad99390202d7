//! Wavefront OBJ subset: `v`, `vn`, `vt` and `f` records.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec2, Vec3};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn floats<const N: usize>(rest: &[&str], path: &Path, line: usize, what: &str) -> Result<[f64; N]> {
    if rest.len() < N {
        return Err(parse_error(path, line, format!("{what} record needs {N} numbers")));
    }
    let mut out = [0.0; N];
    for (o, tok) in out.iter_mut().zip(rest) {
        *o = tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(path, line, format!("bad number `{tok}` in {what} record")))?;
    }
    Ok(out)
}

/// Resolves a 1-based or negative (relative) OBJ index against `count` entries.
fn resolve(tok: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let i: i64 = tok.parse().map_err(|_| parse_error(path, line, format!("bad index `{tok}`")))?;
    let resolved = match i {
        0 => None,
        i if i > 0 => Some(i as usize - 1),
        i => count.checked_sub(i.unsigned_abs() as usize),
    };
    resolved
        .filter(|&r| r < count)
        .ok_or_else(|| parse_error(path, line, format!("index {i} out of range ({count} entries)")))
}

struct Parsed {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Option<Vec3>>,
    uv: Vec<Option<Vec2>>,
}

fn parse(text: &str, path: &Path) -> Result<Parsed> {
    let mut vertices = Vec::new();
    let mut vn = Vec::new();
    let mut vt = Vec::new();
    let mut corners: Vec<(usize, Vec<(usize, Option<usize>, Option<usize>)>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        match tag {
            "v" => vertices.push(floats::<3>(&rest, path, line, "v")?),
            "vn" => vn.push(floats::<3>(&rest, path, line, "vn")?),
            "vt" => vt.push(floats::<2>(&rest, path, line, "vt")?),
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_error(path, line, "face needs at least three vertices"));
                }
                let mut face = Vec::with_capacity(rest.len());
                for tok in &rest {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), vertices.len(), path, line)?;
                    let t = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, vt.len(), path, line)?),
                        _ => None,
                    };
                    let n = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, vn.len(), path, line)?),
                        _ => None,
                    };
                    face.push((v, t, n));
                }
                corners.push((line, face));
            }
            _ => {}
        }
    }

    let mut normals = vec![None; vertices.len()];
    let mut uv: Vec<Option<Vec2>> = vec![None; vertices.len()];
    let mut faces = Vec::new();
    for (line, face) in &corners {
        for &(v, t, n) in face {
            if let Some(n) = n {
                normals[v].get_or_insert(vn[n]);
            }
            if let Some(t) = t {
                let value = vt[t];
                match uv[v] {
                    None => uv[v] = Some(value),
                    Some(prev) if prev != value => {
                        return Err(parse_error(path, *line, format!("vertex {} has conflicting vt", v + 1)));
                    }
                    Some(_) => {}
                }
            }
        }
        // fan triangulation around the first corner
        for i in 1..face.len() - 1 {
            let tri = [face[0].0, face[i].0, face[i + 1].0];
            if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                faces.push(tri);
            } else {
                log::warn!("{}:{line}: skipping triangle with repeated vertex", path.display());
            }
        }
    }
    Ok(Parsed { vertices, faces, normals, uv })
}

fn read(path: &Path) -> Result<Parsed> {
    let text = fs::read_to_string(path)?;
    parse(&text, path)
}

fn into_mesh(p: Parsed) -> Result<TriMesh> {
    let mut mesh = TriMesh::new(p.vertices, p.faces)?;
    if let Some(n) = p.normals.into_iter().collect::<Option<Vec<_>>>() {
        if !n.is_empty() {
            mesh = mesh.with_normals(n)?;
        }
    }
    Ok(mesh)
}

/// Mesh positions, faces and per-vertex normals referenced by faces. `vt`
/// records are ignored.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    into_mesh(read(path.as_ref())?)
}

/// Like [`load_obj`] but also reads per-vertex UV from `f v/vt` references.
/// Every vertex must receive exactly one texture coordinate.
pub fn load_obj_with_uv(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let mut p = read(path)?;
    let uv = std::mem::take(&mut p.uv);
    let uv = uv
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| parse_error(path, 0, format!("vertex {} has no texture coordinate", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    into_mesh(p)?.with_uv(uv)
}

/// Uniform map from raw UV into the unit square: `t = (uv − offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UvTransform {
    pub offset: Vec2,
    pub scale: f64,
}

impl UvTransform {
    /// Fits the bounding box of `uv` into `[0,1]²` with one scale factor, so angles are kept.
    pub fn fit(uv: &[Vec2]) -> Self {
        let Some((lo, hi)) = crate::geometry::bounds(uv) else {
            return Self { offset: [0.0; 2], scale: 1.0 };
        };
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Self { offset: lo, scale: if side > 0.0 { side } else { 1.0 } }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        [(p[0] - self.offset[0]) / self.scale, (p[1] - self.offset[1]) / self.scale]
    }

    pub fn invert(&self, t: Vec2) -> Vec2 {
        [t[0] * self.scale + self.offset[0], t[1] * self.scale + self.offset[1]]
    }
}

/// Writes `v`, one `vt` per vertex and `f v/vt` records. Returns the UV
/// rescaling, which is also recorded in a comment line.
pub fn export_obj_with_uv(mesh: &TriMesh, uv: &[Vec2], path: impl AsRef<Path>) -> Result<UvTransform> {
    if uv.len() != mesh.vertices().len() {
        return Err(Error::Shape(format!("{} uv rows for {} vertices", uv.len(), mesh.vertices().len())));
    }
    let t = UvTransform::fit(uv);
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    writeln!(w, "# uv = vt * {:e} + ({:e}, {:e})", t.scale, t.offset[0], t.offset[1])?;
    for v in mesh.vertices() {
        writeln!(w, "v {:e} {:e} {:e}", v[0], v[1], v[2])?;
    }
    for p in uv {
        let q = t.apply(*p);
        writeln!(w, "vt {:e} {:e}", q[0], q[1])?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {0}/{0} {1}/{1} {2}/{2}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    log::info!("uv rescaled by 1/{} after offset ({}, {})", t.scale, t.offset[0], t.offset[1]);
    Ok(t)
}

/// Plain mesh export (`v` and `f`).
pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    for v in mesh.vertices() {
        writeln!(w, "v {:e} {:e} {:e}", v[0], v[1], v[2])?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Points as `v` records followed by one-vertex `p` elements.
pub fn write_obj_points(points: &[Vec3], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    for v in points {
        writeln!(w, "v {:e} {:e} {:e}", v[0], v[1], v[2])?;
    }
    for i in 0..points.len() {
        writeln!(w, "p {}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}
