//! Exact k-nearest-neighbor search in 2D and 3D.
//!
//! Neighbors are ordered by `(squared distance, index)`, so equidistant
//! candidates resolve to the lower index. The tree never prunes a subtree
//! whose bound equals the current worst distance, which keeps that tie rule
//! exact against exhaustive search.

use rayon::prelude::*;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Row-major `queries × k` neighbor table.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    k: usize,
    entries: Vec<Neighbor>,
}

impl Neighbors {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.entries.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Neighbor]> {
        self.entries.chunks_exact(self.k.max(1))
    }

    /// Flat neighbor indices, row-major.
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|n| n.index).collect()
    }
}

#[inline]
pub fn squared_distance<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a borrowed reference set.
#[derive(Debug)]
pub struct KdTree<'a, const D: usize> {
    points: &'a [[f64; D]],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Bounded candidate list kept sorted by `(d², index)`.
struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn offer(&mut self, d2: f64, index: usize) {
        let key = (d2, index);
        if self.items.len() == self.k {
            let last = self.items[self.k - 1];
            if !(key < last) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&probe| probe < key);
        self.items.insert(pos, key);
    }
}

impl<'a, const D: usize> KdTree<'a, D> {
    pub fn build(points: &'a [[f64; D]]) -> Self {
        let mut tree = Self { points, order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut self.order[start..end];
        let pts = self.points;
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in slice.iter() {
            for d in 0..D {
                lo[d] = lo[d].min(pts[i][d]);
                hi[d] = hi[d].max(pts[i][d]);
            }
        }
        let dim = (0..D).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][dim].total_cmp(&pts[b][dim]).then(a.cmp(&b)));
        let value = pts[slice[mid]][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest reference rows to `q`, skipping reference row `skip`.
    pub fn nearest(&self, q: &[f64; D], k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        let mut best = Best { k, items: Vec::with_capacity(k + 1) };
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, q, skip, &mut best);
        }
        best.items.into_iter().map(|(d2, index)| Neighbor { index, distance: d2.sqrt() }).collect()
    }

    fn search(&self, node: usize, q: &[f64; D], skip: Option<usize>, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) != skip {
                        best.offer(squared_distance(q, &self.points[i]), i);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                // points equal to the split value can sit on either side
                if diff * diff <= best.worst() {
                    self.search(far, q, skip, best);
                }
            }
        }
    }
}

fn check_dim<const D: usize>() {
    assert!(D == 2 || D == 3, "nearest-neighbor search supports 2D and 3D");
}

/// For every query row, the `k` nearest reference rows (ascending distance,
/// ties to the lower index).
pub fn knn<const D: usize>(query: &[[f64; D]], reference: &[[f64; D]], k: usize) -> Result<Neighbors> {
    check_dim::<D>();
    if k > reference.len() {
        return Err(Error::TooFewPoints { k, available: reference.len() });
    }
    let tree = KdTree::build(reference);
    let entries = query.par_iter().flat_map_iter(|q| tree.nearest(q, k, None)).collect();
    Ok(Neighbors { k, entries })
}

/// Neighbors of each point within its own set, never matching itself.
pub fn knn_self<const D: usize>(points: &[[f64; D]], k: usize) -> Result<Neighbors> {
    check_dim::<D>();
    if k >= points.len().max(1) && k > 0 {
        return Err(Error::TooFewPoints { k, available: points.len().saturating_sub(1) });
    }
    let tree = KdTree::build(points);
    let entries = points
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, q)| tree.nearest(q, k, Some(i)))
        .collect();
    Ok(Neighbors { k, entries })
}

/// Index of the nearest reference row for each query (ties to lower index).
pub fn nearest_indices<const D: usize>(query: &[[f64; D]], reference: &[[f64; D]]) -> Result<Vec<usize>> {
    Ok(knn(query, reference, 1)?.indices())
}
