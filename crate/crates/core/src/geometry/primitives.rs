//! Procedural test surfaces.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{norm3, TriMesh, Vec3};

/// `nx × ny` vertex grid over `[-w/2, w/2] × [-h/2, h/2]` in the `z = 0`
/// plane, row-major, every quad split into two counter-clockwise triangles.
pub fn planar_grid(nx: usize, ny: usize, width: f64, height: f64) -> TriMesh {
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 vertices");
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = width * (i as f64 / (nx - 1) as f64 - 0.5);
            let y = height * (j as f64 / (ny - 1) as f64 - 0.5);
            vertices.push([x, y, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx, a + nx + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh::new(vertices, faces).expect("grid is valid")
}

/// Open cylinder around the z axis without caps: `segments` vertices per
/// ring, `rings` rings from `z = -h/2` to `z = h/2`. The mesh closes around
/// the circumference (no duplicated seam vertices).
pub fn open_cylinder(segments: usize, rings: usize, radius: f64, height: f64) -> TriMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::with_capacity(segments * rings);
    for r in 0..rings {
        let z = height * (r as f64 / (rings - 1) as f64 - 0.5);
        for s in 0..segments {
            let t = 2.0 * PI * s as f64 / segments as f64;
            vertices.push([radius * t.cos(), radius * t.sin(), z]);
        }
    }
    let mut faces = Vec::with_capacity(2 * segments * (rings - 1));
    for r in 0..rings - 1 {
        for s in 0..segments {
            let a = r * segments + s;
            let b = r * segments + (s + 1) % segments;
            let (c, d) = (a + segments, b + segments);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh::new(vertices, faces).expect("cylinder is valid")
}

pub fn octahedron() -> TriMesh {
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let faces = vec![[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
    TriMesh::new(vertices, faces).expect("octahedron is valid")
}

/// Unit-radius icosphere; `subdivisions = 0` is the icosahedron (12 vertices),
/// each level splits every triangle into four (level 4 has 2562 vertices).
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let unit = |p: Vec3| {
        let l = norm3(p);
        [p[0] / l, p[1] / l, p[2] / l]
    };
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(unit)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(unit([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces).expect("icosphere is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cross3, dot3, sub3};

    fn outward(mesh: &TriMesh) -> bool {
        let v = mesh.vertices();
        mesh.faces().iter().all(|f| {
            let n = cross3(sub3(v[f[1]], v[f[0]]), sub3(v[f[2]], v[f[0]]));
            let c = [(v[f[0]][0] + v[f[1]][0] + v[f[2]][0]), (v[f[0]][1] + v[f[1]][1] + v[f[2]][1]), (v[f[0]][2] + v[f[1]][2] + v[f[2]][2])];
            dot3(n, c) > 0.0
        })
    }

    #[test]
    fn counts() {
        let g = planar_grid(50, 50, 2.0, 2.0);
        assert_eq!((g.vertices().len(), g.faces().len()), (2500, 2 * 49 * 49));
        let c = open_cylinder(64, 40, 1.0, 2.0);
        assert_eq!((c.vertices().len(), c.faces().len()), (2560, 2 * 64 * 39));
        let s = icosphere(4);
        assert_eq!((s.vertices().len(), s.faces().len()), (2562, 5120));
    }

    #[test]
    fn closed_shapes_face_outward() {
        assert!(outward(&octahedron()));
        assert!(outward(&icosphere(2)));
        assert!(outward(&open_cylinder(16, 4, 1.0, 1.0)));
    }
}
