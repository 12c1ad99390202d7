//! Parameterization quality: angle distortion, UV overlap, and the noise
//! robustness harness.

pub mod conformality;
pub mod overlap;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use conformality::{conformality, conformality_metric, Conformality};
pub use overlap::{adjacent_pair_count, self_intersection, self_intersection_rate, triangles_overlap, SelfIntersection};

use crate::autodiff::Matrix;
use crate::error::Result;
use crate::geometry::{add_gaussian_noise, normalize_mesh, uv_bbox_side, TriMesh, Vec2};
use crate::model::network::{rows2, rows3};
use crate::model::{
    extract_seams, make_grid, match_uv_by_nn, parameterize, train, AblationMode, FlattenModel, LossHistory, SeamSet,
    TrainConfig, TrainSource,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute angle difference, radians.
    pub conformality: f64,
    /// Overlapping pairs over all face pairs.
    pub self_intersection_rate: f64,
    /// Overlapping pairs over pairs of faces sharing no vertex.
    pub self_intersection_rate_nonadjacent: f64,
    pub overlapping_pairs: usize,
    pub triangle_count: usize,
    pub evaluated_triangles: usize,
    /// Faces degenerate in 3D or UV, left out of the conformality mean.
    pub degenerate_triangles: usize,
    pub seam_points: usize,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 8] = [
        "conformality",
        "self_intersection_rate",
        "self_intersection_rate_nonadjacent",
        "overlapping_pairs",
        "triangle_count",
        "evaluated_triangles",
        "degenerate_triangles",
        "seam_points",
    ];

    /// Metrics of a mesh carrying UV; `seam_points` is taken as given.
    pub fn from_mesh(mesh: &TriMesh, seam_points: usize) -> Result<Self> {
        let c = conformality(mesh)?;
        let uv = mesh.uv().expect("conformality checked uv");
        let s = self_intersection(mesh.faces(), uv)?;
        Ok(Self {
            conformality: c.mean,
            self_intersection_rate: s.rate(),
            self_intersection_rate_nonadjacent: s.rate_nonadjacent(),
            overlapping_pairs: s.overlapping_pairs,
            triangle_count: mesh.faces().len(),
            evaluated_triangles: c.evaluated,
            degenerate_triangles: c.excluded,
            seam_points,
        })
    }

    pub fn values(&self) -> [String; 8] {
        [
            format!("{:.12e}", self.conformality),
            format!("{:.12e}", self.self_intersection_rate),
            format!("{:.12e}", self.self_intersection_rate_nonadjacent),
            self.overlapping_pairs.to_string(),
            self.triangle_count.to_string(),
            self.evaluated_triangles.to_string(),
            self.degenerate_triangles.to_string(),
            self.seam_points.to_string(),
        ]
    }

    /// Header line plus one value line, tab separated.
    pub fn to_tsv(&self) -> String {
        format!("{}\n{}\n", Self::COLUMNS.join("\t"), self.values().join("\t"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// UV, seams and metrics of a trained model on a mesh.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub uv: Vec<Vec2>,
    pub seams: SeamSet,
    pub report: MetricsReport,
}

/// UV for arbitrary points under the given ablation mode. Without branch B
/// the UV is read off the generated surface by nearest-neighbor matching.
pub fn uv_for_points(model: &FlattenModel, points: &[[f64; 3]], cfg: &TrainConfig) -> Result<Vec<Vec2>> {
    match cfg.ablation {
        AblationMode::NoBranchB => {
            let grid = make_grid(cfg.n_points)?;
            let q_hat: Matrix = model.deform_net(&grid)?;
            let p_hat = model.wrap_net(&q_hat)?.positions;
            match_uv_by_nn(points, &rows3(&p_hat), &rows2(&q_hat))
        }
        mode => parameterize(model, points, mode.cut()),
    }
}

/// Parameterizes every vertex of `mesh`, extracts seams with the configured
/// threshold rule and scores the result.
pub fn evaluate(model: &FlattenModel, mesh: &TriMesh, cfg: &TrainConfig) -> Result<Evaluation> {
    let uv = uv_for_points(model, mesh.vertices(), cfg)?;
    let l_q = uv_bbox_side(&uv)?;
    let seams = extract_seams(mesh.vertices(), &uv, cfg.k_cut, cfg.t_cut(l_q))?;
    let with_uv = mesh.clone().with_uv(uv.clone())?;
    let report = MetricsReport::from_mesh(&with_uv, seams.len())?;
    Ok(Evaluation { uv, seams, report })
}

#[derive(Clone, Debug)]
pub struct NoiseRun {
    pub level: f64,
    pub report: MetricsReport,
    pub history: LossHistory,
}

/// For every level: perturb the normalized vertices, train a fresh model on
/// the noisy cloud without normals, then evaluate on the clean mesh.
pub fn noise_robustness_run(source: &TriMesh, levels: &[f64], cfg: &TrainConfig) -> Result<Vec<NoiseRun>> {
    let (mesh, _) = normalize_mesh(source)?;
    let clean = mesh.to_point_set()?;
    let cfg = TrainConfig { use_normals: false, ..cfg.clone() };
    levels
        .iter()
        .map(|&level| {
            let noisy = add_gaussian_noise(&clean, level, cfg.seed)?;
            let model = FlattenModel::new(cfg.architecture.clone(), cfg.seed)?;
            let out = train(model, TrainSource::Points(&noisy), &cfg)?;
            let eval = evaluate(&out.model, &mesh, &cfg)?;
            Ok(NoiseRun { level, report: eval.report, history: out.history })
        })
        .collect()
}

/// Tab-separated table with one row per noise level.
pub fn noise_table(runs: &[NoiseRun]) -> String {
    let mut out = format!("level\t{}\n", MetricsReport::COLUMNS.join("\t"));
    for r in runs {
        let _ = writeln!(out, "{}\t{}", r.level, r.report.values().join("\t"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::planar_grid;

    #[test]
    fn identity_plane_report() {
        let mesh = planar_grid(5, 5, 2.0, 2.0);
        let uv = mesh.vertices().iter().map(|p| [p[0], p[1]]).collect();
        let mesh = mesh.with_uv(uv).unwrap();
        let r = MetricsReport::from_mesh(&mesh, 0).unwrap();
        assert!(r.conformality < 1e-12);
        assert_eq!(r.self_intersection_rate, 0.0);
        assert_eq!(r.evaluated_triangles + r.degenerate_triangles, r.triangle_count);
        let tsv = r.to_tsv();
        assert_eq!(tsv.lines().next().unwrap().split('\t').count(), 8);
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
