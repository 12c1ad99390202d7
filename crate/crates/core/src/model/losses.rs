//! Training objectives, recorded on a [`Tape`].
//!
//! Neighbor sets and Chamfer matchings are computed from the current values
//! and then held fixed; only the distances they select are differentiated.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::Result;
use crate::geometry::{chamfer_distance, knn_self};

use super::network::{rows2, rows3};

/// How the per-point sums of the unwrapping and conformal terms are reduced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Divide by the number of points.
    #[default]
    Mean,
    Sum,
}

fn reduce(tape: &mut Tape, x: Var, reduction: Reduction) -> Var {
    match reduction {
        Reduction::Sum => tape.sum(x),
        Reduction::Mean => {
            let rows = tape.value(x).rows().max(1) as f64;
            let s = tape.sum(x);
            tape.scale(s, 1.0 / rows)
        }
    }
}

/// Hinge on the distance from each UV point to its `k` nearest UV neighbors:
/// `Σᵢ Σₖ max(0, ε − ‖qᵢ − qᵢ⁽ᵏ⁾‖)`.
pub fn loss_unwrap(tape: &mut Tape, q: Var, k: usize, eps: f64, reduction: Reduction) -> Result<Var> {
    let points = rows2(tape.value(q));
    let n = points.len();
    let neighbors = knn_self(&points, k)?;
    let centers: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(k)).collect();
    let qi = tape.gather(q, centers);
    let qk = tape.gather(q, neighbors.indices());
    let diff = tape.sub(qi, qk);
    let dist = tape.row_norm(diff);
    let hinge = tape.hinge_below(dist, eps);
    let total = tape.sum(hinge);
    Ok(match reduction {
        Reduction::Sum => total,
        // mean over points of the per-point sum over neighbors
        Reduction::Mean => tape.scale(total, 1.0 / n.max(1) as f64),
    })
}

fn mean_squared_rows(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let sq = tape.square(d);
    let rows = tape.row_sum(sq);
    tape.mean(rows)
}

/// Chamfer distance between generated and target points with the matching
/// fixed at the current values.
pub fn loss_wrap(tape: &mut Tape, generated: Var, target: Var) -> Result<Var> {
    let (a, b) = (rows3(tape.value(generated)), rows3(tape.value(target)));
    let ch = chamfer_distance(&a, &b)?;
    let matched_b = tape.gather(target, ch.a_to_b);
    let matched_a = tape.gather(generated, ch.b_to_a);
    let forward = mean_squared_rows(tape, generated, matched_b);
    let backward = mean_squared_rows(tape, target, matched_a);
    Ok(tape.add(forward, backward))
}

/// Mean over rows of the L1 norm of `a - b`.
pub fn mean_row_l1(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let ab = tape.abs(d);
    let rows = tape.row_sum(ab);
    tape.mean(rows)
}

/// Mean over rows of `1 − cos(a, b)`.
pub fn mean_cosine_gap(tape: &mut Tape, a: Var, b: Var) -> Var {
    let ua = tape.normalize_rows(a);
    let ub = tape.normalize_rows(b);
    let prod = tape.mul(ua, ub);
    let cos = tape.row_sum(prod);
    let neg = tape.scale(cos, -1.0);
    let gap = tape.offset(neg, 1.0);
    tape.mean(gap)
}

/// Pairs entering the cycle-consistency loss; absent pairs contribute nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct CycleTerms {
    /// `(P, P_cycle)`
    pub positions: Option<(Var, Var)>,
    /// `(Q̂, Q̂_cycle)`
    pub uv: Option<(Var, Var)>,
    /// `(Pⁿ, Pⁿ_cycle)`
    pub normals: Option<(Var, Var)>,
}

pub fn loss_cycle(tape: &mut Tape, terms: CycleTerms) -> Var {
    let mut parts = Vec::new();
    if let Some((a, b)) = terms.positions {
        parts.push(mean_row_l1(tape, a, b));
    }
    if let Some((a, b)) = terms.uv {
        parts.push(mean_row_l1(tape, a, b));
    }
    if let Some((a, b)) = terms.normals {
        parts.push(mean_cosine_gap(tape, a, b));
    }
    sum_all(tape, &parts)
}

fn sum_all(tape: &mut Tape, parts: &[Var]) -> Var {
    match parts.split_first() {
        None => tape.leaf(Matrix::scalar(0.0)),
        Some((&first, rest)) => rest.iter().fold(first, |acc, &p| tape.add(acc, p)),
    }
}

/// `|λ₁ − λ₂|` of `JᵀJ` for a `3×2` Jacobian `[[∂x/∂u, ∂x/∂v], …]`.
///
/// With `JᵀJ = [[a, b], [b, c]]` the gap is `sqrt(tr² − 4 det)`, evaluated
/// as `sqrt((a − c)² + 4b²)` which is the same quantity without cancellation.
pub fn eigen_gap(j: &[[f64; 2]; 3]) -> f64 {
    let a: f64 = j.iter().map(|r| r[0] * r[0]).sum();
    let b: f64 = j.iter().map(|r| r[0] * r[1]).sum();
    let c: f64 = j.iter().map(|r| r[1] * r[1]).sum();
    ((a - c) * (a - c) + 4.0 * b * b).max(0.0).sqrt()
}

/// Row-wise eigenvalue gap from Jacobian columns `ju`, `jv` (`n×3` each).
pub fn eigen_gap_rows(tape: &mut Tape, ju: Var, jv: Var) -> Var {
    let uu = tape.mul(ju, ju);
    let a = tape.row_sum(uu);
    let uv = tape.mul(ju, jv);
    let b = tape.row_sum(uv);
    let vv = tape.mul(jv, jv);
    let c = tape.row_sum(vv);
    let amc = tape.sub(a, c);
    let two_b = tape.scale(b, 2.0);
    let stacked = tape.concat(amc, two_b);
    // ‖(a − c, 2b)‖ has a bounded gradient, unlike a bare sqrt at zero
    tape.row_norm(stacked)
}

/// Sum (or mean) of the eigenvalue gaps over each Jacobian field.
pub fn loss_conformal(tape: &mut Tape, fields: &[(Var, Var)], reduction: Reduction) -> Var {
    let parts: Vec<Var> = fields
        .iter()
        .map(|&(ju, jv)| {
            let gaps = eigen_gap_rows(tape, ju, jv);
            reduce(tape, gaps, reduction)
        })
        .collect();
    sum_all(tape, &parts)
}

/// Loss weights for unwrap, wrap, cycle and conformal terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub unwrap: f64,
    pub wrap: f64,
    pub cycle: f64,
    pub conformal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { unwrap: 0.01, wrap: 1.0, cycle: 0.01, conformal: 0.01 }
    }
}

/// Unweighted values of the four objectives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub unwrap: f64,
    pub wrap: f64,
    pub cycle: f64,
    pub conformal: f64,
}

impl LossParts {
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [("unwrap", self.unwrap), ("wrap", self.wrap), ("cycle", self.cycle), ("conformal", self.conformal)]
    }
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> f64 {
    weights.unwrap * parts.unwrap
        + weights.wrap * parts.wrap
        + weights.cycle * parts.cycle
        + weights.conformal * parts.conformal
}
