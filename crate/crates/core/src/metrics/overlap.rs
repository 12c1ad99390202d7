//! UV triangle overlap: pairs of faces whose images share interior area.

use rayon::prelude::*;
use robust::{orient2d, Coord};

use crate::error::{Error, Result};
use crate::geometry::{is_degenerate, Vec2};

/// Pair counts behind the overlap rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelfIntersection {
    pub overlapping_pairs: usize,
    /// `F·(F−1)/2`.
    pub total_pairs: usize,
    /// Pairs of faces sharing no vertex.
    pub nonadjacent_pairs: usize,
    /// Faces degenerate in UV, never counted as overlapping.
    pub degenerate_faces: usize,
}

impl SelfIntersection {
    pub fn rate(&self) -> f64 {
        ratio(self.overlapping_pairs, self.total_pairs)
    }

    pub fn rate_nonadjacent(&self) -> f64 {
        ratio(self.overlapping_pairs, self.nonadjacent_pairs)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn coord(p: Vec2) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

/// Whether the open interiors of two non-degenerate triangles intersect.
///
/// Two convex polygons have disjoint interiors exactly when one of their
/// edge lines has the other polygon entirely on its closed outer side. All
/// sign tests use exact orientation predicates.
pub fn triangles_overlap(a: &[Vec2; 3], b: &[Vec2; 3]) -> bool {
    !separated_by_edge(a, b) && !separated_by_edge(b, a)
}

fn separated_by_edge(t: &[Vec2; 3], other: &[Vec2; 3]) -> bool {
    let s = orient(t[0], t[1], t[2]).signum();
    (0..3).any(|e| {
        let (p, q) = (t[e], t[(e + 1) % 3]);
        other.iter().all(|&x| orient(p, q, x) * s <= 0.0)
    })
}

fn shares_vertex(f: &[usize; 3], g: &[usize; 3]) -> bool {
    f.iter().any(|i| g.contains(i))
}

/// Number of unordered face pairs sharing at least one vertex.
pub fn adjacent_pair_count(faces: &[[usize; 3]], vertex_count: usize) -> usize {
    let mut incident = vec![Vec::new(); vertex_count];
    for (f, face) in faces.iter().enumerate() {
        for &v in face {
            incident[v].push(f);
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for list in &incident {
        for (a, &f) in list.iter().enumerate() {
            for &g in &list[a + 1..] {
                pairs.push((f.min(g), f.max(g)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs.len()
}

/// Overlapping UV face pairs, excluding pairs that share a mesh vertex.
/// Sweep over faces sorted by their lowest `u` as the broad phase.
pub fn self_intersection(faces: &[[usize; 3]], uv: &[Vec2]) -> Result<SelfIntersection> {
    if let Some(f) = faces.iter().position(|f| f.iter().any(|&i| i >= uv.len())) {
        return Err(Error::InvalidArgument(format!("face {f} references a missing uv row")));
    }
    let n = faces.len();
    let tri = |f: &[usize; 3]| [uv[f[0]], uv[f[1]], uv[f[2]]];
    let live: Vec<usize> = (0..n)
        .filter(|&f| {
            let t = tri(&faces[f]);
            !is_degenerate(t[0], t[1], t[2])
        })
        .collect();
    let boxes: Vec<[f64; 4]> = faces
        .iter()
        .map(|f| {
            let t = tri(f);
            let (mut lo, mut hi) = (t[0], t[0]);
            for p in &t[1..] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
            [lo[0], lo[1], hi[0], hi[1]]
        })
        .collect();
    let mut order = live.clone();
    order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]).then(a.cmp(&b)));

    let overlapping_pairs = (0..order.len())
        .into_par_iter()
        .map(|s| {
            let f = order[s];
            let bf = boxes[f];
            let tf = tri(&faces[f]);
            let mut count = 0usize;
            for &g in &order[s + 1..] {
                let bg = boxes[g];
                if bg[0] > bf[2] {
                    break;
                }
                if bg[1] > bf[3] || bg[3] < bf[1] || shares_vertex(&faces[f], &faces[g]) {
                    continue;
                }
                if triangles_overlap(&tf, &tri(&faces[g])) {
                    count += 1;
                }
            }
            count
        })
        .sum();

    let total_pairs = n * n.saturating_sub(1) / 2;
    let adjacent = adjacent_pair_count(faces, uv.len());
    Ok(SelfIntersection {
        overlapping_pairs,
        total_pairs,
        nonadjacent_pairs: total_pairs - adjacent,
        degenerate_faces: n - live.len(),
    })
}

/// Overlapping pairs over all `F·(F−1)/2` face pairs.
pub fn self_intersection_rate(mesh: &crate::geometry::TriMesh) -> Result<f64> {
    let uv = mesh.uv().ok_or_else(|| Error::InvalidArgument("mesh has no uv coordinates".into()))?;
    Ok(self_intersection(mesh.faces(), uv)?.rate())
}
