mod common;

use common::oracles::{clip_area, run_oracles};

#[test]
fn kernels_match_exhaustive_references() {
    let r = run_oracles(150, 7);
    assert_eq!((r.knn, r.chamfer, r.eigen_gap, r.self_intersection), (0, 0, 0, 0), "{r:?}");
    assert!(r.overlapping_pairs_seen > 50, "instances should contain overlaps: {r:?}");
}

#[test]
fn clipping_oracle_sanity() {
    let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    assert!((clip_area(&a, &a) - 0.5).abs() < 1e-15);
    let b = [[0.5, 0.0], [1.5, 0.0], [0.5, 1.0]];
    assert!((clip_area(&a, &b) - 0.125).abs() < 1e-15);
    let c = [[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]];
    assert_eq!(clip_area(&a, &c), 0.0);
}

#[test]
fn narrow_phase_agrees_with_sampling() {
    let (bad, missed, band, hits) = common::oracles::narrow_phase_vs_sampling(500, 11);
    assert_eq!(bad, 0, "missed {missed}, band {band}, overlapping {hits}");
    assert!(missed <= 5);
    assert!(hits > 100);
}
