//! Seam detection from UV discontinuities between 3D neighbors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::knn::{knn_self, nearest_indices};
use crate::geometry::{Vec2, Vec3};

/// Points whose 3D neighborhood is torn apart in UV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeamSet {
    /// Ascending indices into the input points.
    pub indices: Vec<usize>,
    /// `η` for every input point.
    pub eta: Vec<f64>,
    pub threshold: f64,
}

impl SeamSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// `η_i` is the largest UV distance from point `i` to any of its `k_cut`
/// nearest 3D neighbors; points with `η_i > t_cut` are seam points.
///
/// Points sharing an identical position are treated as one: the first
/// occurrence is searched and its `η` is shared by the copies.
pub fn extract_seams(p: &[Vec3], q: &[Vec2], k_cut: usize, t_cut: f64) -> Result<SeamSet> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("{} points but {} UV rows", p.len(), q.len())));
    }
    if !(t_cut >= 0.0) {
        return Err(Error::InvalidArgument(format!("seam threshold {t_cut} must be non-negative")));
    }
    let mut first: HashMap<[u64; 3], usize> = HashMap::with_capacity(p.len());
    let mut unique = Vec::new();
    let mut slot = Vec::with_capacity(p.len());
    for (i, x) in p.iter().enumerate() {
        let key = x.map(|c| (c + 0.0).to_bits());
        let s = *first.entry(key).or_insert_with(|| {
            unique.push(i);
            unique.len() - 1
        });
        slot.push(s);
    }
    if unique.len() <= k_cut {
        return Err(Error::TooFewPoints { k: k_cut, available: unique.len().saturating_sub(1) });
    }
    let pts: Vec<Vec3> = unique.iter().map(|&i| p[i]).collect();
    let nb = knn_self(&pts, k_cut)?;
    let eta_unique: Vec<f64> = unique
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            nb.row(s)
                .iter()
                .map(|n| {
                    let o = q[unique[n.index]];
                    (q[i][0] - o[0]).hypot(q[i][1] - o[1])
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let eta: Vec<f64> = slot.iter().map(|&s| eta_unique[s]).collect();
    let indices = (0..p.len()).filter(|&i| eta[i] > t_cut).collect();
    Ok(SeamSet { indices, eta, threshold: t_cut })
}

/// UV for each of `p` copied from the `q_hat` row of its nearest `p_hat` row.
pub fn match_uv_by_nn(p: &[Vec3], p_hat: &[Vec3], q_hat: &[Vec2]) -> Result<Vec<Vec2>> {
    if p_hat.len() != q_hat.len() {
        return Err(Error::Shape(format!("{} generated points but {} UV rows", p_hat.len(), q_hat.len())));
    }
    if p_hat.is_empty() {
        return Err(Error::Empty("generated point set"));
    }
    Ok(nearest_indices(p, p_hat)?.into_iter().map(|j| q_hat[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(t_cut: f64) -> (Vec<Vec3>, Vec<Vec2>) {
        let p: Vec<Vec3> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut q: Vec<Vec2> = (0..10).map(|i| [i as f64 * 1e-3 * t_cut, 0.0]).collect();
        q[5][1] += 10.0 * t_cut;
        (p, q)
    }

    #[test]
    fn identity_plane_has_no_seams() {
        let mut p = Vec::new();
        let mut q = Vec::new();
        // spacing below T_cut / √2 so even corner neighborhoods stay under it
        for j in 0..100 {
            for i in 0..100 {
                let (u, v) = (i as f64 / 99.0, j as f64 / 99.0);
                p.push([u, v, 0.0]);
                q.push([u, v]);
            }
        }
        let s = extract_seams(&p, &q, 3, 0.02).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.eta.len(), 10_000);
    }

    #[test]
    fn displaced_chain_point() {
        // with three neighbors and ties to the lower index, point 7's
        // neighborhood {6, 8, 5} also reaches the displaced point
        let t = 0.1;
        let (p, q) = chain(t);
        let s = extract_seams(&p, &q, 3, t).unwrap();
        assert_eq!(s.indices, vec![4, 5, 6, 7]);
        let s2 = extract_seams(&p, &q, 2, t).unwrap();
        assert_eq!(s2.indices, vec![4, 5, 6]);
    }

    #[test]
    fn raising_threshold_only_removes() {
        let (p, q) = chain(0.1);
        let lo = extract_seams(&p, &q, 3, 0.0).unwrap();
        let hi = extract_seams(&p, &q, 3, 0.5).unwrap();
        assert!(hi.indices.iter().all(|i| lo.contains(*i)));
    }

    #[test]
    fn duplicates_are_merged() {
        let (mut p, mut q) = chain(0.1);
        p.push(p[2]);
        q.push(q[2]);
        let s = extract_seams(&p, &q, 3, 0.1).unwrap();
        assert_eq!(s.indices, vec![4, 5, 6, 7]);
        assert_eq!(s.eta[10], s.eta[2]);
    }

    #[test]
    fn too_few_points() {
        let p = [[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(extract_seams(&p, &[[0.0; 2]; 3], 3, 0.1).is_err());
    }

    #[test]
    fn nn_matching_copies_rows() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let q = [[5.0, 5.0], [6.0, 6.0], [7.0, 7.0]];
        assert_eq!(match_uv_by_nn(&p, &p, &q).unwrap(), q.to_vec());
        let near = [[0.9, 0.1, 0.0]];
        assert_eq!(match_uv_by_nn(&near, &p, &q).unwrap(), vec![[6.0, 6.0]]);
    }
}
