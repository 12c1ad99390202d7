//! Per-shape training: one tape per iteration holding both branches, the four
//! objectives and the Jacobian tangents, followed by one Adam step over all
//! shared parameters.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{uv_bbox_side, PointSet, TriMesh};

use super::losses::{
    loss_conformal, loss_cycle, loss_unwrap, loss_wrap, total_loss, CycleTerms, LossParts, LossWeights, Reduction,
};
use super::network::{make_grid, matrix3, rows2, Architecture, FlattenModel, ModelVars, WrapOut};

/// Which parts of the cycle mapping take part in training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    #[default]
    Full,
    /// Drop the grid → UV → surface → UV branch.
    NoBranchA,
    /// Drop the surface → UV → surface branch; UV comes from nearest-neighbor matching.
    NoBranchB,
    /// Replace the Cut-Net with the identity in both branches.
    NoCutNet,
}

impl AblationMode {
    pub fn branch_a(self) -> bool {
        self != AblationMode::NoBranchA
    }

    pub fn branch_b(self) -> bool {
        self != AblationMode::NoBranchB
    }

    pub fn cut(self) -> bool {
        self != AblationMode::NoCutNet
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoBranchA => "no-branch-a",
            AblationMode::NoBranchB => "no-branch-b",
            AblationMode::NoCutNet => "no-cut-net",
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-branch-a" => Ok(Self::NoBranchA),
            "no-branch-b" => Ok(Self::NoBranchB),
            "no-cut-net" => Ok(Self::NoCutNet),
            other => Err(Error::InvalidArgument(format!("unknown ablation mode `{other}`"))),
        }
    }
}

/// Stop when the best total loss of the last `window` iterations improves on
/// the best before it by less than `min_relative_improvement`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub min_relative_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { window: 200, min_relative_improvement: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Points sampled per iteration; also the lattice size, so a perfect square.
    pub n_points: usize,
    pub k_unwrap: usize,
    /// `ε = eps_factor · L(Q) / √N`
    pub eps_factor: f64,
    pub k_cut: usize,
    /// `T_cut = t_cut_factor · L(Q)`
    pub t_cut_factor: f64,
    pub weights: LossWeights,
    pub iterations: usize,
    pub early_stop: Option<EarlyStop>,
    pub adam: AdamConfig,
    /// Seeds network initialization and per-iteration sampling.
    pub seed: u64,
    /// Supervise cycle normals when the source carries normals.
    pub use_normals: bool,
    pub reduction: Reduction,
    pub ablation: AblationMode,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_points: 10_000,
            k_unwrap: 8,
            eps_factor: 0.2,
            k_cut: 3,
            t_cut_factor: 0.02,
            weights: LossWeights::default(),
            iterations: 3000,
            early_stop: Some(EarlyStop::default()),
            adam: AdamConfig::default(),
            seed: 0,
            use_normals: true,
            reduction: Reduction::Mean,
            ablation: AblationMode::Full,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let nonneg = [w.unwrap, w.wrap, w.cycle, w.conformal, self.eps_factor, self.t_cut_factor];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights and thresholds must be finite and non-negative".into()));
        }
        make_grid(self.n_points)?;
        if self.k_unwrap == 0 || self.k_unwrap >= self.n_points {
            return Err(Error::InvalidArgument(format!("k_unwrap {} needs 0 < k < N", self.k_unwrap)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        self.architecture.validate()
    }

    pub fn epsilon(&self, l_q: f64) -> f64 {
        self.eps_factor * l_q / (self.n_points as f64).sqrt()
    }

    pub fn t_cut(&self, l_q: f64) -> f64 {
        self.t_cut_factor * l_q
    }
}

/// Intermediate point sets of one pass. A branch is `None` when ablated.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs {
    pub a: Option<BranchA>,
    pub b: Option<BranchB>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchA {
    pub q_hat: Matrix,
    pub p_hat: Matrix,
    pub p_hat_normals: Matrix,
    pub p_hat_cut: Matrix,
    pub q_hat_cycle: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchB {
    pub p_cut: Matrix,
    pub q: Matrix,
    pub p_cycle: Matrix,
    pub p_cycle_normals: Matrix,
}

/// Tape handles of branch A.
#[derive(Clone, Debug)]
pub struct BranchAVars {
    pub q_hat: Var,
    pub wrap: WrapOut,
    pub p_hat_cut: Var,
    pub q_hat_cycle: Var,
}

/// Tape handles of branch B.
#[derive(Clone, Debug)]
pub struct BranchBVars {
    pub p_cut: Var,
    pub q: Var,
    pub wrap: WrapOut,
}

/// Deform → Wrap → Cut → Unwrap.
pub fn forward_branch_a(
    model: &FlattenModel,
    vars: &ModelVars,
    grid: Var,
    use_cut: bool,
    tape: &mut Tape,
) -> Result<BranchAVars> {
    let q_hat = model.deform_on(vars, grid, tape)?;
    let wrap = model.wrap_on(vars, q_hat, tape)?;
    let p_hat_cut = model.cut_on(vars, wrap.positions, use_cut, tape)?;
    let q_hat_cycle = model.unwrap_on(vars, p_hat_cut, tape)?;
    Ok(BranchAVars { q_hat, wrap, p_hat_cut, q_hat_cycle })
}

/// Cut → Unwrap → Wrap, with the parameters shared with branch A.
pub fn forward_branch_b(
    model: &FlattenModel,
    vars: &ModelVars,
    points: Var,
    use_cut: bool,
    tape: &mut Tape,
) -> Result<BranchBVars> {
    let p_cut = model.cut_on(vars, points, use_cut, tape)?;
    let q = model.unwrap_on(vars, p_cut, tape)?;
    let wrap = model.wrap_on(vars, q, tape)?;
    Ok(BranchBVars { p_cut, q, wrap })
}

/// One training batch: sampled surface points and the fixed lattice.
#[derive(Clone, Debug)]
pub struct Batch {
    pub points: Matrix,
    pub normals: Option<Matrix>,
    pub grid: Matrix,
}

impl Batch {
    pub fn new(sample: &PointSet, grid: Matrix) -> Self {
        Self {
            points: matrix3(sample.positions()),
            normals: sample.normals().map(matrix3),
            grid,
        }
    }
}

/// Thresholds used by one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// `L(Q)` of the UV set the unwrapping loss acts on.
    pub l_q: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct StepEval {
    pub parts: LossParts,
    pub total: f64,
    pub thresholds: Thresholds,
    pub outputs: BranchOutputs,
    /// Gradients in [`FlattenModel::blocks`] order (empty unless requested).
    pub grads: Vec<Matrix>,
}

/// Evaluates all objectives on one batch. `eps` overrides the threshold rule
/// (used to hold it fixed under finite differences).
pub fn evaluate_step(
    model: &FlattenModel,
    batch: &Batch,
    cfg: &TrainConfig,
    eps: Option<f64>,
    want_grads: bool,
) -> Result<StepEval> {
    let mode = cfg.ablation;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let points = tape.leaf(batch.points.clone());

    let a = if mode.branch_a() {
        let grid = tape.leaf(batch.grid.clone());
        Some(forward_branch_a(model, &vars, grid, mode.cut(), &mut tape)?)
    } else {
        None
    };
    let b = if mode.branch_b() { Some(forward_branch_b(model, &vars, points, mode.cut(), &mut tape)?) } else { None };

    // the unwrapping loss acts on Q, or on Q̂ when branch B is ablated
    let uv = match (&b, &a) {
        (Some(b), _) => b.q,
        (None, Some(a)) => a.q_hat,
        (None, None) => unreachable!("at least one branch is active"),
    };
    let l_q = uv_bbox_side(&rows2(tape.value(uv))).unwrap_or(0.0);
    let thresholds = Thresholds { l_q, eps: eps.unwrap_or_else(|| cfg.epsilon(l_q)) };
    let l_unwrap = loss_unwrap(&mut tape, uv, cfg.k_unwrap, thresholds.eps, cfg.reduction)?;

    let l_wrap = match &a {
        Some(a) => loss_wrap(&mut tape, a.wrap.positions, points)?,
        None => tape.leaf(Matrix::scalar(0.0)),
    };

    let normals = match (&b, &batch.normals) {
        (Some(b), Some(n)) if cfg.use_normals => Some((tape.leaf(n.clone()), b.wrap.normals)),
        _ => None,
    };
    let terms = CycleTerms {
        positions: b.as_ref().map(|b| (points, b.wrap.positions)),
        uv: a.as_ref().map(|a| (a.q_hat, a.q_hat_cycle)),
        normals,
    };
    let l_cycle = loss_cycle(&mut tape, terms);

    let mut fields = Vec::new();
    if let Some(b) = &b {
        fields.push(model.wrap_jacobian_on(&vars, &b.wrap, &mut tape)?);
    }
    if let Some(a) = &a {
        fields.push(model.wrap_jacobian_on(&vars, &a.wrap, &mut tape)?);
    }
    let l_conf = loss_conformal(&mut tape, &fields, cfg.reduction);

    let w = cfg.weights;
    let weighted: Vec<Var> = [(l_unwrap, w.unwrap), (l_wrap, w.wrap), (l_cycle, w.cycle), (l_conf, w.conformal)]
        .into_iter()
        .map(|(v, k)| tape.scale(v, k))
        .collect();
    let mut total_var = weighted[0];
    for &v in &weighted[1..] {
        total_var = tape.add(total_var, v);
    }

    let parts = LossParts {
        unwrap: tape.value(l_unwrap).item(),
        wrap: tape.value(l_wrap).item(),
        cycle: tape.value(l_cycle).item(),
        conformal: tape.value(l_conf).item(),
    };
    let total = total_loss(&parts, &cfg.weights);

    let outputs = BranchOutputs {
        a: a.as_ref().map(|a| BranchA {
            q_hat: tape.value(a.q_hat).clone(),
            p_hat: tape.value(a.wrap.positions).clone(),
            p_hat_normals: tape.value(a.wrap.normals).clone(),
            p_hat_cut: tape.value(a.p_hat_cut).clone(),
            q_hat_cycle: tape.value(a.q_hat_cycle).clone(),
        }),
        b: b.as_ref().map(|b| BranchB {
            p_cut: tape.value(b.p_cut).clone(),
            q: tape.value(b.q).clone(),
            p_cycle: tape.value(b.wrap.positions).clone(),
            p_cycle_normals: tape.value(b.wrap.normals).clone(),
        }),
    };

    let grads = if want_grads {
        let mut g = tape.backward(total_var)?;
        vars.blocks()
            .into_iter()
            .map(|v| {
                g.take(v).unwrap_or_else(|| {
                    let (r, c) = tape.value(v).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(StepEval { parts, total, thresholds, outputs, grads })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub parts: LossParts,
    pub total: f64,
}

/// Per-iteration loss components.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub rows: Vec<HistoryRow>,
}

impl LossHistory {
    pub const HEADER: &'static str = "iteration\tunwrap\twrap\tcycle\tconf\ttotal";

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    /// Tab-separated table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let p = r.parts;
            let _ = writeln!(
                out,
                "{}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
                r.iteration, p.unwrap, p.wrap, p.cycle, p.conformal, r.total
            );
        }
        out
    }

    /// Whether the configured plateau rule fires at the current length.
    pub fn plateaued(&self, rule: &EarlyStop) -> bool {
        let n = self.rows.len();
        if rule.window == 0 || n <= rule.window {
            return false;
        }
        let split = n - rule.window;
        let best = |rows: &[HistoryRow]| rows.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
        let before = best(&self.rows[..split]);
        let recent = best(&self.rows[split..]);
        before - recent < rule.min_relative_improvement * before.abs()
    }
}

/// Where training points come from.
#[derive(Clone, Copy, Debug)]
pub enum TrainSource<'a> {
    Mesh(&'a TriMesh),
    Points(&'a PointSet),
}

impl TrainSource<'_> {
    pub fn point_set(&self) -> Result<PointSet> {
        match self {
            TrainSource::Mesh(m) => m.to_point_set(),
            TrainSource::Points(p) => Ok((*p).clone()),
        }
    }
}

pub struct TrainOutcome {
    pub model: FlattenModel,
    pub history: LossHistory,
    pub adam: AdamState,
    /// Outputs of the final iteration.
    pub last: Option<StepEval>,
}

/// Stateful training loop; [`train`] drives it to completion.
pub struct Trainer {
    model: FlattenModel,
    cfg: TrainConfig,
    source: PointSet,
    grid: Matrix,
    adam: AdamState,
    rng: ChaCha8Rng,
    names: Vec<String>,
    history: LossHistory,
    last: Option<StepEval>,
}

impl Trainer {
    pub fn new(model: FlattenModel, source: PointSet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() {
            return Err(Error::Empty("training source has no points"));
        }
        let grid = make_grid(cfg.n_points)?;
        let adam = AdamState::new(cfg.adam, model.blocks());
        let names = model.block_names();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_5A4D_9135);
        Ok(Self { model, cfg, source, grid, adam, rng, names, history: LossHistory::default(), last: None })
    }

    pub fn model(&self) -> &FlattenModel {
        &self.model
    }

    pub fn history(&self) -> &LossHistory {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Draws the next batch without training on it.
    pub fn next_batch(&mut self) -> Result<Batch> {
        let (sample, _) = self.source.sample(self.cfg.n_points, self.rng.gen())?;
        Ok(Batch::new(&sample, self.grid.clone()))
    }

    pub fn step(&mut self) -> Result<HistoryRow> {
        let iteration = self.history.len();
        let batch = self.next_batch()?;
        let eval = evaluate_step(&self.model, &batch, &self.cfg, None, true)?;
        for (name, value) in eval.parts.components() {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { iteration, component: name });
            }
        }
        if !eval.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration, component: "total" });
        }
        let mut blocks = self.model.blocks_mut();
        self.adam.step(&mut blocks, &eval.grads, &self.names)?;
        let row = HistoryRow { iteration, parts: eval.parts, total: eval.total };
        self.history.rows.push(row);
        self.last = Some(StepEval { grads: Vec::new(), ..eval });
        Ok(row)
    }

    pub fn finished(&self) -> bool {
        self.history.len() >= self.cfg.iterations
            || self.cfg.early_stop.as_ref().is_some_and(|rule| self.history.plateaued(rule))
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome { model: self.model, history: self.history, adam: self.adam, last: self.last }
    }
}

pub fn train(model: FlattenModel, source: TrainSource<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, source, cfg, |_| {})
}

pub fn train_with_progress(
    model: FlattenModel,
    source: TrainSource<'_>,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, source.point_set()?, cfg.clone())?;
    while !trainer.finished() {
        let row = trainer.step()?;
        on_step(&row);
    }
    Ok(trainer.finish())
}
