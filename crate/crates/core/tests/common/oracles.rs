//! Exhaustive reference implementations and random instance families.

use flatten_core::geometry::chamfer::chamfer_distance;
use flatten_core::geometry::knn::{knn, knn_self};
use flatten_core::metrics::overlap::self_intersection;
use flatten_core::model::eigen_gap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn brute_knn<const D: usize>(q: &[f64; D], reference: &[[f64; D]], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, r)| ((0..D).map(|d| (q[d] - r[d]) * (q[d] - r[d])).sum(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn brute_chamfer<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
    let one = |x: &[[f64; D]], y: &[[f64; D]]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| (0..D).map(|d| (p[d] - q[d]) * (p[d] - q[d])).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / x.len() as f64
    };
    one(a, b) + one(b, a)
}

/// Eigenvalue gap of `JᵀJ` by one Jacobi rotation of the 2×2 Gram matrix.
pub fn jacobi_gap(j: &[[f64; 2]; 3]) -> f64 {
    let mut g = [[0.0; 2]; 2];
    for r in j {
        for a in 0..2 {
            for b in 0..2 {
                g[a][b] += r[a] * r[b];
            }
        }
    }
    let theta = 0.5 * (2.0 * g[0][1]).atan2(g[0][0] - g[1][1]);
    let (s, c) = theta.sin_cos();
    let l1 = c * c * g[0][0] + 2.0 * s * c * g[0][1] + s * s * g[1][1];
    let l2 = s * s * g[0][0] - 2.0 * s * c * g[0][1] + c * c * g[1][1];
    (l1 - l2).abs()
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - p[1] * q[0]
        })
        .sum::<f64>()
        * 0.5
}

/// Area of the intersection of two triangles by Sutherland–Hodgman clipping.
pub fn clip_area(a: &[[f64; 2]; 3], b: &[[f64; 2]; 3]) -> f64 {
    let mut clip = b.to_vec();
    if signed_area(&clip) < 0.0 {
        clip.reverse();
    }
    let mut poly = a.to_vec();
    for e in 0..3 {
        let (p, q) = (clip[e], clip[(e + 1) % 3]);
        let side = |x: [f64; 2]| (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
        let input = std::mem::take(&mut poly);
        for i in 0..input.len() {
            let (cur, next) = (input[i], input[(i + 1) % input.len()]);
            let (sc, sn) = (side(cur), side(next));
            if sc >= 0.0 {
                poly.push(cur);
            }
            if (sc >= 0.0) != (sn >= 0.0) {
                let t = sc / (sc - sn);
                poly.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
            }
        }
        if poly.is_empty() {
            return 0.0;
        }
    }
    signed_area(&poly).abs()
}

/// Overlapping pairs by clipping every pair; pairs sharing a vertex and
/// zero-area UV faces are skipped. Clipped areas up to 1e-15 count as roundoff.
pub fn brute_overlaps(faces: &[[usize; 3]], uv: &[[f64; 2]]) -> usize {
    let tri = |f: &[usize; 3]| [uv[f[0]], uv[f[1]], uv[f[2]]];
    let mut count = 0;
    for i in 0..faces.len() {
        let a = tri(&faces[i]);
        let area_a = signed_area(&a).abs();
        if area_a == 0.0 {
            continue;
        }
        for j in i + 1..faces.len() {
            if faces[i].iter().any(|v| faces[j].contains(v)) {
                continue;
            }
            let b = tri(&faces[j]);
            let area_b = signed_area(&b).abs();
            if area_b == 0.0 {
                continue;
            }
            if clip_area(&a, &b) > 1e-15 {
                count += 1;
            }
        }
    }
    count
}

pub fn random_points<const D: usize>(rng: &mut ChaCha8Rng, n: usize, lattice: bool) -> Vec<[f64; D]> {
    (0..n)
        .map(|_| {
            std::array::from_fn(|_| if lattice { rng.gen_range(0..4) as f64 } else { rng.gen_range(-1.0..1.0) })
        })
        .collect()
}

/// A `k × k` vertex grid with jittered, partly folded UV.
pub fn crumpled_grid(rng: &mut ChaCha8Rng) -> (Vec<[usize; 3]>, Vec<[f64; 2]>) {
    let k = rng.gen_range(3..=8);
    let jitter = rng.gen_range(0.0..0.9) / k as f64;
    let fold = rng.gen_bool(0.5);
    let mut uv = Vec::new();
    for j in 0..k {
        for i in 0..k {
            let (mut u, v) = (i as f64 / (k - 1) as f64, j as f64 / (k - 1) as f64);
            if fold && u > 0.5 {
                u = 1.0 - u + 0.3 * v;
            }
            uv.push([u + rng.gen_range(-jitter..=jitter), v + rng.gen_range(-jitter..=jitter)]);
        }
    }
    let mut faces = Vec::new();
    for j in 0..k - 1 {
        for i in 0..k - 1 {
            let a = j * k + i;
            faces.push([a, a + 1, a + k + 1]);
            faces.push([a, a + k + 1, a + k]);
        }
    }
    (faces, uv)
}

/// Disjoint-vertex triangles scattered in the unit square.
pub fn triangle_soup(rng: &mut ChaCha8Rng) -> (Vec<[usize; 3]>, Vec<[f64; 2]>) {
    let n = rng.gen_range(2..40);
    let size = rng.gen_range(0.05..0.5);
    let mut uv = Vec::new();
    let mut faces = Vec::new();
    for f in 0..n {
        let c = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        for _ in 0..3 {
            uv.push([c[0] + rng.gen_range(-size..size), c[1] + rng.gen_range(-size..size)]);
        }
        faces.push([3 * f, 3 * f + 1, 3 * f + 2]);
    }
    (faces, uv)
}

/// Mismatch counts per oracle over `instances` random instances each.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleReport {
    pub knn: usize,
    pub chamfer: usize,
    pub eigen_gap: usize,
    pub self_intersection: usize,
    pub overlapping_pairs_seen: usize,
}

pub fn run_oracles(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = OracleReport::default();
    for i in 0..instances {
        let lattice = i % 3 == 0;
        let n = rng.gen_range(5..400);
        let k = rng.gen_range(1..5.min(n));
        let p3: Vec<[f64; 3]> = random_points(&mut rng, n, lattice);
        let m = rng.gen_range(1..50);
        let q3: Vec<[f64; 3]> = random_points(&mut rng, m, lattice);
        let p2: Vec<[f64; 2]> = random_points(&mut rng, n, lattice);
        let fast = knn(&q3, &p3, k).unwrap();
        let selfs = knn_self(&p3, k).unwrap();
        let fast2 = knn_self(&p2, k).unwrap();
        let ok = q3.iter().enumerate().all(|(j, q)| {
            fast.row(j).iter().map(|x| x.index).collect::<Vec<_>>() == brute_knn(q, &p3, k, None)
        }) && p3.iter().enumerate().all(|(j, q)| {
            selfs.row(j).iter().map(|x| x.index).collect::<Vec<_>>() == brute_knn(q, &p3, k, Some(j))
        }) && p2.iter().enumerate().all(|(j, q)| {
            fast2.row(j).iter().map(|x| x.index).collect::<Vec<_>>() == brute_knn(q, &p2, k, Some(j))
        });
        r.knn += usize::from(!ok);

        let c = chamfer_distance(&q3, &p3).unwrap().value;
        let c2 = chamfer_distance(&p2, &p2[..n / 2 + 1]).unwrap().value;
        let ok = (c - brute_chamfer(&q3, &p3)).abs() <= 1e-10
            && (c2 - brute_chamfer(&p2, &p2[..n / 2 + 1])).abs() <= 1e-10;
        r.chamfer += usize::from(!ok);

        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let j: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)]);
        let g = eigen_gap(&j);
        r.eigen_gap += usize::from((g - jacobi_gap(&j)).abs() > 1e-10 * g.max(1.0));

        let (faces, uv) = if i % 2 == 0 { crumpled_grid(&mut rng) } else { triangle_soup(&mut rng) };
        let si = self_intersection(&faces, &uv).unwrap();
        let want = brute_overlaps(&faces, &uv);
        let total = faces.len() * (faces.len() - 1) / 2;
        let want_rate = if total == 0 { 0.0 } else { want as f64 / total as f64 };
        r.self_intersection += usize::from(si.overlapping_pairs != want || (si.rate() - want_rate).abs() > 1e-10);
        r.overlapping_pairs_seen += want;
    }
    r
}

fn strictly_inside(t: &[[f64; 2]; 3], x: [f64; 2]) -> bool {
    let o = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
    let s = [o(t[0], t[1]), o(t[1], t[2]), o(t[2], t[0])];
    s.iter().all(|&v| v > 0.0) || s.iter().all(|&v| v < 0.0)
}

/// Barycentric lattice of about `count` points covering a triangle.
fn lattice(t: &[[f64; 2]; 3], count: usize) -> Vec<[f64; 2]> {
    let m = ((2 * count) as f64).sqrt() as usize;
    let mut out = Vec::new();
    for i in 0..=m {
        for j in 0..=m - i {
            let (a, b) = (i as f64 / m as f64, j as f64 / m as f64);
            let c = 1.0 - a - b;
            out.push([a * t[0][0] + b * t[1][0] + c * t[2][0], a * t[0][1] + b * t[1][1] + c * t[2][1]]);
        }
    }
    out
}

/// Whether any lattice sample of either triangle lies strictly inside the other.
pub fn sampled_overlap(a: &[[f64; 2]; 3], b: &[[f64; 2]; 3], samples: usize) -> bool {
    lattice(a, samples).into_iter().any(|x| strictly_inside(b, x))
        || lattice(b, samples).into_iter().any(|x| strictly_inside(a, x))
}

/// Random triangle pairs: predicate against point sampling. Slivers thinner
/// than the sample spacing escape the sampler, so a disagreement is charged
/// to the predicate only when the clipped area also contradicts it; pairs
/// with clipped area below 1e-10 form the boundary band. Returns
/// `(disagreements, sampler misses, band pairs, overlapping pairs)`.
pub fn narrow_phase_vs_sampling(pairs: usize, seed: u64) -> (usize, usize, usize, usize) {
    use flatten_core::metrics::overlap::triangles_overlap;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tri = |rng: &mut ChaCha8Rng| -> [[f64; 2]; 3] {
        loop {
            let t: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)]);
            if signed_area(&t).abs() > 1e-3 {
                return t;
            }
        }
    };
    let (mut bad, mut missed, mut band, mut hits) = (0, 0, 0, 0);
    for _ in 0..pairs {
        let a = tri(&mut rng);
        let b = tri(&mut rng);
        let exact = triangles_overlap(&a, &b);
        hits += usize::from(exact);
        let area = clip_area(&a, &b);
        if area > 0.0 && area < 1e-10 {
            band += 1;
            continue;
        }
        if exact != sampled_overlap(&a, &b, 10_000) {
            if exact == (area >= 1e-10) {
                missed += 1;
            } else {
                bad += 1;
            }
        }
    }
    (bad, missed, band, hits)
}
