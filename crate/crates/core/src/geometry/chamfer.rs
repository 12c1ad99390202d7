//! Symmetric Chamfer distance with the matchings that produced it.

use crate::error::{Error, Result};

use super::knn::{nearest_indices, squared_distance};

#[derive(Clone, Debug, PartialEq)]
pub struct Chamfer {
    pub value: f64,
    /// For each row of `a`, its nearest row of `b`.
    pub a_to_b: Vec<usize>,
    /// For each row of `b`, its nearest row of `a`.
    pub b_to_a: Vec<usize>,
}

/// Mean squared nearest-neighbor distance from `a` to `b`, plus the same from
/// `b` to `a`. The returned matchings let a differentiable evaluation hold the
/// correspondence fixed within an optimization step.
pub fn chamfer_distance<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> Result<Chamfer> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer distance needs two non-empty sets"));
    }
    let a_to_b = nearest_indices(a, b)?;
    let b_to_a = nearest_indices(b, a)?;
    let forward: f64 = a.iter().zip(&a_to_b).map(|(p, &j)| squared_distance(p, &b[j])).sum();
    let backward: f64 = b.iter().zip(&b_to_a).map(|(p, &j)| squared_distance(p, &a[j])).sum();
    Ok(Chamfer { value: forward / a.len() as f64 + backward / b.len() as f64, a_to_b, b_to_a })
}
