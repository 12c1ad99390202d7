//! Fixtures shared by the benchmarks.

use flatten_core::geometry::primitives::icosphere;
use flatten_core::{Matrix, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniformly in `[-1, 1]^D`.
pub fn random_points<const D: usize>(n: usize, seed: u64) -> Vec<[f64; D]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Unit sphere vertices with normals, 2562 points.
pub fn sphere_points() -> PointSet {
    icosphere(4).to_point_set().expect("icosphere has normals")
}
