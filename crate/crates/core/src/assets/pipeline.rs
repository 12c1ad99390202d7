//! End-to-end runs: load, normalize, train, parameterize, extract seams,
//! score and export.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::obj::{export_obj_with_uv, load_obj, load_obj_with_uv, write_obj_points};
use super::points::{extension, load_ply, load_xyz, write_ply, PlyFormat};
use super::render::{assign_checker_colors, render_uv_layout, Layout, RenderOptions};
use crate::error::{Error, Result};
use crate::geometry::{normalize_mesh, normalize_points, uv_bbox_side, vertex_normals, NormalizationTransform};
use crate::geometry::{PointSet, TriMesh, Vec2, Vec3};
use crate::metrics::{evaluate, noise_robustness_run, noise_table, uv_for_points, MetricsReport, NoiseRun};
use crate::model::{extract_seams, train_with_progress, FlattenModel, LossHistory, SeamSet, TrainConfig, TrainSource};
use crate::autodiff::Checkpoint;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    /// Mesh when the file carries faces, point cloud otherwise.
    #[default]
    Auto,
    Mesh,
    /// Train without normals even if the file has them.
    PointCloud,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    /// Checker cell size in UV units; `None` picks `L(Q) / 16`.
    pub checker_period: Option<f64>,
    pub image_size: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { checker_period: None, image_size: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: PathBuf,
    pub kind: InputKind,
    pub train: TrainConfig,
    pub noise_levels: Vec<f64>,
    pub output_dir: PathBuf,
    pub render: RenderSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            kind: InputKind::Auto,
            train: TrainConfig::default(),
            noise_levels: vec![0.01, 0.02, 0.04],
            output_dir: PathBuf::from("out"),
            render: RenderSettings::default(),
        }
    }
}

/// Stored next to the network weights in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub train: TrainConfig,
    pub normalization: NormalizationTransform,
}

/// A loaded and normalized input.
#[derive(Clone, Debug)]
pub struct Source {
    pub points: PointSet,
    /// Present when the input has faces; vertices equal `points` positions.
    pub mesh: Option<TriMesh>,
    pub normalization: NormalizationTransform,
}

fn read_raw(path: &Path) -> Result<(PointSet, Option<TriMesh>)> {
    match extension(path).as_str() {
        "obj" => {
            let mesh = load_obj(path)?;
            let ps = mesh.to_point_set()?;
            let mesh = (!mesh.faces().is_empty()).then_some(mesh);
            Ok((ps, mesh))
        }
        "ply" => {
            let d = load_ply(path)?;
            if d.faces.is_empty() {
                Ok((d.to_point_set()?, None))
            } else {
                let mesh = d.to_mesh()?;
                Ok((mesh.to_point_set()?, Some(mesh)))
            }
        }
        _ => Ok((load_xyz(path)?, None)),
    }
}

pub fn load_source(path: &Path, kind: InputKind) -> Result<Source> {
    let (ps, mesh) = read_raw(path)?;
    if kind == InputKind::Mesh && mesh.is_none() {
        return Err(Error::InvalidArgument(format!("{} has no faces", path.display())));
    }
    let (points, normalization) = normalize_points(&ps)?;
    let mesh = match mesh {
        Some(m) => Some(normalize_mesh(&m)?.0),
        None => None,
    };
    let points = if kind == InputKind::PointCloud { points.without_normals() } else { points };
    Ok(Source { points, mesh, normalization })
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-check");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Raw UV, one `u v` row per point, in shortest round-trip notation.
pub fn write_uv_text(path: &Path, uv: &[Vec2]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in uv {
        writeln!(w, "{:?} {:?}", p[0], p[1])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_uv_text(path: &Path) -> Result<Vec<Vec2>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.is_empty() {
            continue;
        }
        let bad = || Error::Parse { path: path.to_path_buf(), line: k + 1, message: "expected `u v`".into() };
        if vals.len() != 2 {
            return Err(bad());
        }
        let u = vals[0].parse().map_err(|_| bad())?;
        let v = vals[1].parse().map_err(|_| bad())?;
        out.push([u, v]);
    }
    Ok(out)
}

/// Seam indices one per line, and the seam points as OBJ point records.
pub fn write_seams(dir: &Path, seams: &SeamSet, points: &[Vec3]) -> Result<()> {
    let mut text = String::new();
    for i in &seams.indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    write_text(&dir.join("seams.txt"), &text)?;
    let pts: Vec<Vec3> = seams.indices.iter().map(|&i| points[i]).collect();
    write_obj_points(&pts, dir.join("seams.obj"))
}

pub fn read_seams(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("bad index `{l}`"),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub history: LossHistory,
    pub uv: Vec<Vec2>,
    pub seams: SeamSet,
    pub report: Option<MetricsReport>,
    pub output_dir: PathBuf,
}

/// UV, seams and exports of a trained model on a normalized source.
fn export_results(
    model: &FlattenModel,
    source: &Source,
    cfg: &RunConfig,
    history: &LossHistory,
    checkpoint: Option<Checkpoint>,
) -> Result<RunSummary> {
    let dir = &cfg.output_dir;
    let positions = source.points.positions();
    let (uv, seams, report) = match &source.mesh {
        Some(mesh) => {
            let e = evaluate(model, mesh, &cfg.train)?;
            (e.uv, e.seams, Some(e.report))
        }
        None => {
            let uv = uv_for_points(model, positions, &cfg.train)?;
            let l = uv_bbox_side(&uv)?;
            let seams = extract_seams(positions, &uv, cfg.train.k_cut, cfg.train.t_cut(l))?;
            (uv, seams, None)
        }
    };

    write_text(&dir.join("loss_history.tsv"), &history.to_tsv())?;
    if let Some(ck) = checkpoint {
        ck.save(dir.join("model.ckpt"))?;
    }
    write_uv_text(&dir.join("uv_raw.txt"), &uv)?;
    write_seams(dir, &seams, positions)?;
    if let Some(r) = &report {
        write_text(&dir.join("metrics.tsv"), &r.to_tsv())?;
        write_text(&dir.join("metrics.json"), &r.to_json())?;
    }
    if let Some(mesh) = &source.mesh {
        export_obj_with_uv(mesh, &uv, dir.join("uv.obj"))?;
    }

    let normals = source.points.normals();
    let faces = source.mesh.as_ref().map(|m| m.faces());
    let layout = Layout { uv: &uv, normals, faces, seams: &seams.indices };
    let opts = RenderOptions { size: cfg.render.image_size, ..RenderOptions::default() };
    render_uv_layout(&layout, &opts, dir.join("layout.png"))?;
    render_uv_layout(&layout, &opts, dir.join("layout.svg"))?;
    let period = cfg.render.checker_period.unwrap_or(uv_bbox_side(&uv)? / 16.0);
    let colors = assign_checker_colors(&uv, period)?;
    write_ply(dir.join("checker.ply"), positions, normals, Some(&colors), PlyFormat::BinaryLittleEndian)?;

    Ok(RunSummary { history: history.clone(), uv, seams, report, output_dir: dir.clone() })
}

/// The full `train` pipeline.
pub fn run_train(cfg: &RunConfig) -> Result<RunSummary> {
    ensure_writable(&cfg.output_dir)?;
    let mut source = load_source(&cfg.input, cfg.kind)?;
    let mut train_cfg = cfg.train.clone();
    if source.points.normals().is_none() {
        train_cfg.use_normals = false;
    }
    if !train_cfg.use_normals {
        source.points = source.points.without_normals();
    }
    let model = FlattenModel::new(train_cfg.architecture.clone(), train_cfg.seed)?;
    log::info!(
        "training {} parameters on {} points for up to {} iterations",
        model.num_parameters(),
        source.points.len(),
        train_cfg.iterations
    );
    let outcome = train_with_progress(model, TrainSource::Points(&source.points), &train_cfg, |row| {
        if row.iteration % 100 == 0 {
            log::info!("iter {:>5}  total {:.6e}", row.iteration, row.total);
        }
    })?;
    let meta = RunMeta { train: train_cfg.clone(), normalization: source.normalization };
    let ck = outcome.model.to_checkpoint(serde_json::to_string(&meta)?, Some(outcome.adam.clone()));
    let run = RunConfig { train: train_cfg, ..cfg.clone() };
    export_results(&outcome.model, &source, &run, &outcome.history, Some(ck))
}

/// Applies a saved model to new points, in the training frame. Writes the
/// UV and seam files to `output_dir`.
pub fn run_unwrap(checkpoint: &Path, input: &Path, output_dir: &Path) -> Result<(Vec<Vec2>, SeamSet)> {
    ensure_writable(output_dir)?;
    let ck = Checkpoint::load(checkpoint)?;
    let meta: RunMeta = serde_json::from_str(&ck.meta)?;
    let model = FlattenModel::from_checkpoint(&ck)?;
    let (ps, _) = read_raw(input)?;
    let points: Vec<Vec3> = ps.positions().iter().map(|&p| meta.normalization.apply(p)).collect();
    let uv = uv_for_points(&model, &points, &meta.train)?;
    let l = uv_bbox_side(&uv)?;
    let seams = extract_seams(&points, &uv, meta.train.k_cut, meta.train.t_cut(l))?;
    write_uv_text(&output_dir.join("uv_raw.txt"), &uv)?;
    write_seams(output_dir, &seams, &points)?;
    Ok((uv, seams))
}

/// Metrics of an OBJ carrying per-vertex UV.
pub fn run_metrics(path: &Path) -> Result<MetricsReport> {
    let mesh = load_obj_with_uv(path)?;
    MetricsReport::from_mesh(&mesh, 0)
}

/// The noise harness on a mesh input; writes `noise.tsv` and one loss
/// history per level.
pub fn run_noise(cfg: &RunConfig) -> Result<Vec<NoiseRun>> {
    ensure_writable(&cfg.output_dir)?;
    let mesh = match read_raw(&cfg.input)? {
        (_, Some(m)) => m,
        (_, None) => return Err(Error::InvalidArgument("the noise harness needs a mesh input for evaluation".into())),
    };
    let runs = noise_robustness_run(&mesh, &cfg.noise_levels, &cfg.train)?;
    write_text(&cfg.output_dir.join("noise.tsv"), &noise_table(&runs))?;
    for r in &runs {
        write_text(&cfg.output_dir.join(format!("loss_history_noise_{}.tsv", r.level)), &r.history.to_tsv())?;
    }
    Ok(runs)
}

/// Renders an OBJ with UV, colored by vertex normals, optionally marking seams.
pub fn run_render(input: &Path, seams: Option<&Path>, output: &Path, opts: &RenderOptions) -> Result<()> {
    let mesh = load_obj_with_uv(input)?;
    let normals: Option<Vec<Vec3>> = match mesh.supplied_normals() {
        Some(n) => Some(n.to_vec()),
        None => vertex_normals(&mesh).ok().and_then(|n| n.into_iter().collect()),
    };
    let seam_idx = match seams {
        Some(p) => read_seams(p)?,
        None => Vec::new(),
    };
    let layout = Layout {
        uv: mesh.uv().expect("loaded with uv"),
        normals: normals.as_deref(),
        faces: Some(mesh.faces()),
        seams: &seam_idx,
    };
    render_uv_layout(&layout, opts, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uv_text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("uv.txt");
        let uv = vec![[0.1, -2.0 / 3.0], [1e-300, 12345.678901234567]];
        write_uv_text(&p, &uv).unwrap();
        assert_eq!(read_uv_text(&p).unwrap(), uv);
    }

    #[test]
    fn run_config_defaults_fill_missing_fields() {
        let cfg: RunConfig = serde_json::from_str(r#"{"input": "a.obj", "train": {"iterations": 5}}"#).unwrap();
        assert_eq!(cfg.train.iterations, 5);
        assert_eq!(cfg.train.k_unwrap, 8);
        assert_eq!(cfg.noise_levels, vec![0.01, 0.02, 0.04]);
    }
}
