//! Point sets, triangle meshes and the non-differentiable kernels around them.

pub mod chamfer;
pub mod knn;
pub mod primitives;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chamfer::{chamfer_distance, Chamfer};
pub use knn::{knn, knn_self, KdTree, Neighbor, Neighbors};

pub type Vec3 = [f64; 3];
pub type Vec2 = [f64; 2];

#[inline]
pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Tolerance on `|n| - 1` accepted for supplied normals.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Surface samples with optional unit normals, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    positions: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointSet {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point positions".into()));
        }
        Ok(Self { positions, normals: None })
    }

    /// Normals must already be unit length within [`UNIT_TOLERANCE`].
    pub fn with_normals(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let mut ps = Self::new(positions)?;
        if normals.len() != ps.positions.len() {
            return Err(Error::Shape(format!(
                "{} normals for {} points",
                normals.len(),
                ps.positions.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (norm3(*n) - 1.0).abs() > UNIT_TOLERANCE) {
            return Err(Error::InvalidArgument(format!("normal {i} is not unit length")));
        }
        ps.normals = Some(normals);
        Ok(ps)
    }

    /// Like [`PointSet::with_normals`] but rescales every normal to unit length.
    pub fn with_normals_renormalized(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let l = norm3(n);
                if l > 0.0 && l.is_finite() {
                    Ok([n[0] / l, n[1] / l, n[2] / l])
                } else {
                    Err(Error::InvalidArgument(format!("normal {i} has zero length")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_normals(positions, normals)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Rows `rows[i]` of this set, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            positions: rows.iter().map(|&i| self.positions[i]).collect(),
            normals: self.normals.as_ref().map(|n| rows.iter().map(|&i| n[i]).collect()),
        }
    }

    /// `n` rows drawn uniformly: without replacement when `n <= len`, with
    /// replacement otherwise. Returns the rows and the source indices.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Self, Vec<usize>)> {
        if n == 0 {
            return Err(Error::InvalidArgument("cannot sample zero points".into()));
        }
        if self.is_empty() {
            return Err(Error::Empty("point set to sample from"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<usize> = if n <= self.len() {
            index::sample(&mut rng, self.len(), n).into_vec()
        } else {
            (0..n).map(|_| rng.gen_range(0..self.len())).collect()
        };
        Ok((self.select(&rows), rows))
    }

    /// `(min, max)` corners of the axis-aligned box.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds(&self.positions)
    }
}

pub fn bounds<const D: usize>(points: &[[f64; D]]) -> Option<([f64; D], [f64; D])> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(mut lo, mut hi), p| {
        for d in 0..D {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
        (lo, hi)
    }))
}

/// Indexed triangle mesh with optional per-vertex UV and normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    uv: Option<Vec<Vec2>>,
    normals: Option<Vec<Vec3>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mesh vertices".into()));
        }
        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidArgument(format!("face {f} references a missing vertex")));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidArgument(format!("face {f} repeats a vertex")));
            }
        }
        Ok(Self { vertices, faces, uv: None, normals: None })
    }

    pub fn with_uv(mut self, uv: Vec<Vec2>) -> Result<Self> {
        if uv.len() != self.vertices.len() {
            return Err(Error::Shape(format!("{} uv rows for {} vertices", uv.len(), self.vertices.len())));
        }
        self.uv = Some(uv);
        Ok(self)
    }

    /// Supplied per-vertex normals (e.g. from `vn` records); rescaled to unit length.
    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(Error::Shape("normal count differs from vertex count".into()));
        }
        let unit = normals
            .into_iter()
            .map(|n| {
                let l = norm3(n);
                if l > 0.0 {
                    [n[0] / l, n[1] / l, n[2] / l]
                } else {
                    n
                }
            })
            .collect();
        self.normals = Some(unit);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn uv(&self) -> Option<&[Vec2]> {
        self.uv.as_deref()
    }

    pub fn supplied_normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    /// Vertices as a point set. Normals come from the supplied ones when they
    /// are all unit length, otherwise from [`vertex_normals`]; they are left
    /// out if any vertex has none (isolated vertex or no faces).
    pub fn to_point_set(&self) -> Result<PointSet> {
        if let Some(n) = &self.normals {
            if n.iter().all(|v| (norm3(*v) - 1.0).abs() <= UNIT_TOLERANCE) {
                return PointSet::with_normals(self.vertices.clone(), n.clone());
            }
        }
        let computed = if self.faces.is_empty() { None } else { vertex_normals(self).ok() };
        match computed.and_then(|n| n.into_iter().collect::<Option<Vec<_>>>()) {
            Some(n) => PointSet::with_normals(self.vertices.clone(), n),
            None => PointSet::new(self.vertices.clone()),
        }
    }
}

/// Uniform centering and isotropic scaling into a box of largest side 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub centroid: Vec3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self { centroid: [0.0; 3], scale: 1.0 }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let c = self.centroid;
        [(p[0] - c[0]) * self.scale, (p[1] - c[1]) * self.scale, (p[2] - c[2]) * self.scale]
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        let c = self.centroid;
        [p[0] / self.scale + c[0], p[1] / self.scale + c[1], p[2] / self.scale + c[2]]
    }
}

/// Moves the centroid to the origin and scales so the largest axis extent is 2.
pub fn normalize_points(ps: &PointSet) -> Result<(PointSet, NormalizationTransform)> {
    let (lo, hi) = ps.bounds().ok_or(Error::Empty("point set"))?;
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
    if extent <= 0.0 {
        return Err(Error::ZeroExtent("all points coincide"));
    }
    let n = ps.len() as f64;
    let mut centroid = [0.0; 3];
    for p in ps.positions() {
        for d in 0..3 {
            centroid[d] += p[d];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let t = NormalizationTransform { centroid, scale: 2.0 / extent };
    let out = PointSet {
        positions: ps.positions.iter().map(|&p| t.apply(p)).collect(),
        normals: ps.normals.clone(),
    };
    Ok((out, t))
}

/// [`normalize_points`] applied to mesh vertices; faces, UV and normals are kept.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<(TriMesh, NormalizationTransform)> {
    let (ps, t) = normalize_points(&PointSet::new(mesh.vertices.clone())?)?;
    let out = TriMesh { vertices: ps.positions, ..mesh.clone() };
    Ok((out, t))
}

/// `n` mesh vertices drawn uniformly (see [`PointSet::sample`]), carrying
/// vertex normals when every vertex has one.
pub fn sample_vertices(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointSet> {
    if mesh.vertices().is_empty() {
        return Err(Error::Empty("mesh has no vertices"));
    }
    Ok(mesh.to_point_set()?.sample(n, seed)?.0)
}

/// Area-weighted average of incident face normals, normalized. `None` marks a
/// vertex with no incident face (or whose incident faces cancel out).
pub fn vertex_normals(mesh: &TriMesh) -> Result<Vec<Option<Vec3>>> {
    if mesh.faces().is_empty() {
        return Err(Error::Empty("mesh has no faces"));
    }
    let v = mesh.vertices();
    let mut acc = vec![[0.0; 3]; v.len()];
    for f in mesh.faces() {
        // |cross| is twice the area, so summing raw cross products weights by area
        let n = cross3(sub3(v[f[1]], v[f[0]]), sub3(v[f[2]], v[f[0]]));
        for &i in f {
            for d in 0..3 {
                acc[i][d] += n[d];
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|n| {
            let l = norm3(n);
            (l > 0.0).then(|| [n[0] / l, n[1] / l, n[2] / l])
        })
        .collect())
}

/// Side of the square bounding box: `max(width, height)`.
pub fn uv_bbox_side(q: &[Vec2]) -> Result<f64> {
    if q.len() < 2 {
        return Err(Error::InvalidArgument("need at least two uv points".into()));
    }
    let (lo, hi) = bounds(q).unwrap();
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if side > 0.0 {
        Ok(side)
    } else {
        Err(Error::ZeroExtent("all uv points coincide"))
    }
}

/// Adds zero-mean Gaussian noise with standard deviation `level` times the
/// bounding-box diagonal to every coordinate. Normals are dropped.
pub fn add_gaussian_noise(ps: &PointSet, level: f64, seed: u64) -> Result<PointSet> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {level}")));
    }
    let Some((lo, hi)) = ps.bounds() else {
        return Ok(ps.clone().without_normals());
    };
    let sigma = level * norm3(sub3(hi, lo));
    if sigma == 0.0 {
        return Ok(ps.clone().without_normals());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = ps
        .positions()
        .iter()
        .map(|p| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng), p[2] + normal.sample(&mut rng)])
        .collect();
    PointSet::new(positions)
}

/// Relative area below which a triangle counts as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

fn lift<const D: usize>(p: [f64; D]) -> Vec3 {
    let mut out = [0.0; 3];
    out[..D].copy_from_slice(&p);
    out
}

/// Twice-area test against the squared mean edge length.
pub fn is_degenerate<const D: usize>(p0: [f64; D], p1: [f64; D], p2: [f64; D]) -> bool {
    let (a, b, c) = (lift(p0), lift(p1), lift(p2));
    let e = [norm3(sub3(b, a)), norm3(sub3(c, b)), norm3(sub3(a, c))];
    let mean = (e[0] + e[1] + e[2]) / 3.0;
    let area = 0.5 * norm3(cross3(sub3(b, a), sub3(c, a)));
    !(area > DEGENERATE_AREA_RATIO * mean * mean)
}

/// Interior angles at `p0`, `p1`, `p2`, in radians.
pub fn triangle_angles<const D: usize>(p0: [f64; D], p1: [f64; D], p2: [f64; D]) -> Result<[f64; 3]> {
    assert!(D == 2 || D == 3, "triangle_angles supports 2D and 3D points");
    if is_degenerate(p0, p1, p2) {
        return Err(Error::DegenerateTriangle);
    }
    let pts = [lift(p0), lift(p1), lift(p2)];
    let angle = |i: usize| {
        let a = sub3(pts[(i + 1) % 3], pts[i]);
        let b = sub3(pts[(i + 2) % 3], pts[i]);
        norm3(cross3(a, b)).atan2(dot3(a, b))
    };
    Ok([angle(0), angle(1), angle(2)])
}
