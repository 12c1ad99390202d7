//! The four sub-networks and the two cycle-mapping branches.
//!
//! ```text
//! branch A:  G ─Deform→ Q̂ ─Wrap→ (P̂, P̂ⁿ) ─Cut→ P̂_cut ─Unwrap→ Q̂_cycle
//! branch B:  P ─Cut→ P_cut ─Unwrap→ Q ─Wrap→ (P_cycle, Pⁿ_cycle)
//! ```
//!
//! Deform, Wrap and Cut are "embed then head" networks: the input is lifted
//! to a latent code, concatenated back with the raw input, and mapped by the
//! head. Deform and Cut add their input back (offset networks) and start as
//! exact identities because their final layers are zero-initialized.

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    mlp_eval, mlp_forward, mlp_tangent, Checkpoint, Matrix, NamedNet, NetSpec, NetVars, ParamStore, Tape, Trace, Var,
};
use crate::error::{Error, Result};

/// Channel lists of every sub-network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub deform_embed: Vec<usize>,
    pub deform_head: Vec<usize>,
    pub wrap_embed: Vec<usize>,
    pub wrap_head: Vec<usize>,
    pub cut_embed: Vec<usize>,
    pub cut_head: Vec<usize>,
    pub unwrap: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            deform_embed: vec![2, 512, 512, 512, 64],
            deform_head: vec![66, 512, 512, 512, 2],
            wrap_embed: vec![2, 512, 512, 512, 64],
            wrap_head: vec![66, 512, 512, 512, 6],
            cut_embed: vec![3, 512, 512, 64],
            cut_head: vec![67, 512, 512, 3],
            unwrap: vec![3, 512, 512, 2],
        }
    }
}

impl Architecture {
    /// Same depths as the default with hidden width `hidden` and latent width `latent`.
    pub fn scaled(hidden: usize, latent: usize) -> Self {
        let h = hidden;
        Self {
            deform_embed: vec![2, h, h, h, latent],
            deform_head: vec![latent + 2, h, h, h, 2],
            wrap_embed: vec![2, h, h, h, latent],
            wrap_head: vec![latent + 2, h, h, h, 6],
            cut_embed: vec![3, h, h, latent],
            cut_head: vec![latent + 3, h, h, 3],
            unwrap: vec![3, h, h, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pair = |name: &str, embed: &[usize], head: &[usize], dim: usize, out: usize| -> Result<()> {
            let ok = embed.len() >= 2
                && head.len() >= 2
                && embed[0] == dim
                && head[0] == embed[embed.len() - 1] + dim
                && head[head.len() - 1] == out;
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name}: inconsistent channel lists {embed:?} / {head:?}")))
            }
        };
        pair("deform", &self.deform_embed, &self.deform_head, 2, 2)?;
        pair("wrap", &self.wrap_embed, &self.wrap_head, 2, 6)?;
        pair("cut", &self.cut_embed, &self.cut_head, 3, 3)?;
        if self.unwrap.first() != Some(&3) || self.unwrap.last() != Some(&2) {
            return Err(Error::InvalidArgument(format!("unwrap: channels {:?}", self.unwrap)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub spec: NetSpec,
    pub params: ParamStore,
}

impl Net {
    fn new(widths: &[usize], seed: u64, zero_final: bool) -> Result<Self> {
        let spec = NetSpec::new(widths.to_vec())?;
        let params = ParamStore::init(&spec, seed, zero_final);
        Ok(Self { spec, params })
    }

    pub fn eval(&self, x: &Matrix) -> Result<Matrix> {
        mlp_eval(&self.spec, &self.params, x)
    }
}

/// `head([embed(x) | x]) (+ x when residual)`
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedHead {
    pub embed: Net,
    pub head: Net,
    pub residual: bool,
}

impl EmbedHead {
    pub fn eval(&self, x: &Matrix) -> Result<Matrix> {
        let code = self.embed.eval(x)?;
        let out = self.head.eval(&code.hcat(x))?;
        Ok(if self.residual { out.zip_map(x, |a, b| a + b) } else { out })
    }
}

#[derive(Clone, Debug)]
pub struct EmbedHeadVars {
    embed: NetVars,
    head: NetVars,
}

/// Recorded forward pass of an [`EmbedHead`], kept for tangent propagation.
#[derive(Clone, Debug)]
pub struct EmbedHeadTrace {
    embed: Trace,
    head: Trace,
    pub output: Var,
}

impl EmbedHead {
    fn forward(&self, vars: &EmbedHeadVars, x: Var, tape: &mut Tape) -> Result<EmbedHeadTrace> {
        let embed = mlp_forward(&self.embed.spec, &vars.embed, x, tape)?;
        let cat = tape.concat(embed.output(), x);
        let head = mlp_forward(&self.head.spec, &vars.head, cat, tape)?;
        let output = if self.residual { tape.add(head.output(), x) } else { head.output() };
        Ok(EmbedHeadTrace { embed, head, output })
    }

    fn tangent(&self, vars: &EmbedHeadVars, trace: &EmbedHeadTrace, dx: Var, tape: &mut Tape) -> Result<Var> {
        let t_embed = mlp_tangent(&self.embed.spec, &vars.embed, &trace.embed, dx, tape)?;
        let cat = tape.concat(t_embed, dx);
        let t_head = mlp_tangent(&self.head.spec, &vars.head, &trace.head, cat, tape)?;
        Ok(if self.residual { tape.add(t_head, dx) } else { t_head })
    }
}

/// Deform, Wrap, Cut and Unwrap networks. Both branches evaluate the same
/// Wrap, Cut and Unwrap parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenModel {
    pub architecture: Architecture,
    pub deform: EmbedHead,
    pub wrap: EmbedHead,
    pub cut: EmbedHead,
    pub unwrap: Net,
}

/// Tape handles of every parameter block, in optimizer order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    deform: EmbedHeadVars,
    wrap: EmbedHeadVars,
    cut: EmbedHeadVars,
    unwrap: NetVars,
}

impl ModelVars {
    pub fn blocks(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for eh in [&self.deform, &self.wrap, &self.cut] {
            out.extend(eh.embed.blocks());
            out.extend(eh.head.blocks());
        }
        out.extend(self.unwrap.blocks());
        out
    }
}

/// Output of the Wrap network on the tape.
#[derive(Clone, Debug)]
pub struct WrapOut {
    pub positions: Var,
    pub normals: Var,
    trace: EmbedHeadTrace,
    input: Var,
}

/// Values of one wrap evaluation outside the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Wrapped {
    pub positions: Matrix,
    pub normals: Matrix,
    /// Rows whose normal channels were all zero and could not be normalized.
    pub degenerate_normals: Vec<usize>,
}

const NET_NAMES: [&str; 7] =
    ["deform.embed", "deform.head", "wrap.embed", "wrap.head", "cut.embed", "cut.head", "unwrap"];

impl FlattenModel {
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let a = &architecture;
        let s = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
        let deform = EmbedHead {
            embed: Net::new(&a.deform_embed, s(1), false)?,
            head: Net::new(&a.deform_head, s(2), true)?,
            residual: true,
        };
        let wrap = EmbedHead {
            embed: Net::new(&a.wrap_embed, s(3), false)?,
            head: Net::new(&a.wrap_head, s(4), false)?,
            residual: false,
        };
        let cut = EmbedHead {
            embed: Net::new(&a.cut_embed, s(5), false)?,
            head: Net::new(&a.cut_head, s(6), true)?,
            residual: true,
        };
        let unwrap = Net::new(&a.unwrap, s(7), false)?;
        Ok(Self { architecture, deform, wrap, cut, unwrap })
    }

    fn nets(&self) -> [&Net; 7] {
        [
            &self.deform.embed,
            &self.deform.head,
            &self.wrap.embed,
            &self.wrap.head,
            &self.cut.embed,
            &self.cut.head,
            &self.unwrap,
        ]
    }

    fn nets_mut(&mut self) -> [&mut Net; 7] {
        [
            &mut self.deform.embed,
            &mut self.deform.head,
            &mut self.wrap.embed,
            &mut self.wrap.head,
            &mut self.cut.embed,
            &mut self.cut.head,
            &mut self.unwrap,
        ]
    }

    /// Every parameter block in optimizer order.
    pub fn blocks(&self) -> Vec<&Matrix> {
        self.nets().into_iter().flat_map(|n| n.params.blocks()).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.nets_mut().into_iter().flat_map(|n| n.params.blocks_mut()).collect()
    }

    /// Names aligned with [`FlattenModel::blocks`], e.g. `wrap.head.w2`.
    pub fn block_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, net) in NET_NAMES.iter().zip(self.nets()) {
            for l in 0..net.spec.num_layers() {
                out.push(format!("{name}.w{l}"));
                out.push(format!("{name}.b{l}"));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.nets().iter().map(|n| n.spec.num_parameters()).sum()
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        let eh = |m: &EmbedHead, tape: &mut Tape| EmbedHeadVars {
            embed: m.embed.params.register(tape),
            head: m.head.params.register(tape),
        };
        ModelVars {
            deform: eh(&self.deform, tape),
            wrap: eh(&self.wrap, tape),
            cut: eh(&self.cut, tape),
            unwrap: self.unwrap.params.register(tape),
        }
    }

    // ---- tape forward ----

    pub fn deform_on(&self, vars: &ModelVars, grid: Var, tape: &mut Tape) -> Result<Var> {
        Ok(self.deform.forward(&vars.deform, grid, tape)?.output)
    }

    pub fn wrap_on(&self, vars: &ModelVars, uv: Var, tape: &mut Tape) -> Result<WrapOut> {
        let trace = self.wrap.forward(&vars.wrap, uv, tape)?;
        let positions = tape.columns(trace.output, 0, 3);
        let raw = tape.columns(trace.output, 3, 6);
        let normals = tape.normalize_rows(raw);
        Ok(WrapOut { positions, normals, trace, input: uv })
    }

    /// Cut-Net, or the identity when `enabled` is false.
    pub fn cut_on(&self, vars: &ModelVars, points: Var, enabled: bool, tape: &mut Tape) -> Result<Var> {
        if enabled {
            Ok(self.cut.forward(&vars.cut, points, tape)?.output)
        } else {
            Ok(points)
        }
    }

    pub fn unwrap_on(&self, vars: &ModelVars, points: Var, tape: &mut Tape) -> Result<Var> {
        Ok(mlp_forward(&self.unwrap.spec, &vars.unwrap, points, tape)?.output())
    }

    /// Columns `∂p/∂u` and `∂p/∂v` of the Wrap-Net position Jacobian at every
    /// input row of a recorded wrap evaluation, as differentiable `n×3` nodes.
    pub fn wrap_jacobian_on(&self, vars: &ModelVars, wrapped: &WrapOut, tape: &mut Tape) -> Result<(Var, Var)> {
        let n = tape.value(wrapped.input).rows();
        let column = |dir: [f64; 2], tape: &mut Tape| -> Result<Var> {
            let dx = tape.leaf(Matrix::from_fn(n, 2, |_, j| dir[j]));
            let t = self.wrap.tangent(&vars.wrap, &wrapped.trace, dx, tape)?;
            Ok(tape.columns(t, 0, 3))
        };
        let ju = column([1.0, 0.0], tape)?;
        let jv = column([0.0, 1.0], tape)?;
        Ok((ju, jv))
    }

    // ---- plain evaluation ----

    pub fn deform_net(&self, grid: &Matrix) -> Result<Matrix> {
        self.deform.eval(grid)
    }

    pub fn wrap_net(&self, uv: &Matrix) -> Result<Wrapped> {
        let out = self.wrap.eval(uv)?;
        let positions = out.select_cols(0, 3);
        let mut normals = out.select_cols(3, 6);
        let mut degenerate_normals = Vec::new();
        for i in 0..normals.rows() {
            let row = normals.row_mut(i);
            let n = row.iter().map(|t| t * t).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|t| *t /= n);
            } else {
                degenerate_normals.push(i);
            }
        }
        Ok(Wrapped { positions, normals, degenerate_normals })
    }

    pub fn cut_net(&self, points: &Matrix) -> Result<Matrix> {
        self.cut.eval(points)
    }

    pub fn unwrap_net(&self, points: &Matrix) -> Result<Matrix> {
        self.unwrap.eval(points)
    }

    /// Per-row `3×2` Jacobians of the Wrap-Net positions, `[[∂x/∂u, ∂x/∂v], …]`.
    pub fn jacobian_uv(&self, uv: &Matrix) -> Result<Vec<[[f64; 2]; 3]>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(uv.clone());
        let w = self.wrap_on(&vars, x, &mut tape)?;
        let (ju, jv) = self.wrap_jacobian_on(&vars, &w, &mut tape)?;
        let (ju, jv) = (tape.value(ju), tape.value(jv));
        Ok((0..uv.rows())
            .map(|i| std::array::from_fn(|r| [ju.get(i, r), jv.get(i, r)]))
            .collect())
    }

    // ---- checkpoints ----

    pub fn to_checkpoint(&self, meta: String, adam: Option<crate::autodiff::AdamState>) -> Checkpoint {
        Checkpoint {
            meta,
            nets: NET_NAMES
                .iter()
                .zip(self.nets())
                .map(|(name, net)| NamedNet { name: name.to_string(), spec: net.spec.clone(), params: net.params.clone() })
                .collect(),
            adam,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let find = |name: &str| -> Result<Net> {
            let n = ck
                .nets
                .iter()
                .find(|n| n.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing network `{name}`")))?;
            Ok(Net { spec: n.spec.clone(), params: n.params.clone() })
        };
        let deform = EmbedHead { embed: find("deform.embed")?, head: find("deform.head")?, residual: true };
        let wrap = EmbedHead { embed: find("wrap.embed")?, head: find("wrap.head")?, residual: false };
        let cut = EmbedHead { embed: find("cut.embed")?, head: find("cut.head")?, residual: true };
        let unwrap = find("unwrap")?;
        let architecture = Architecture {
            deform_embed: deform.embed.spec.widths().to_vec(),
            deform_head: deform.head.spec.widths().to_vec(),
            wrap_embed: wrap.embed.spec.widths().to_vec(),
            wrap_head: wrap.head.spec.widths().to_vec(),
            cut_embed: cut.embed.spec.widths().to_vec(),
            cut_head: cut.head.spec.widths().to_vec(),
            unwrap: unwrap.spec.widths().to_vec(),
        };
        architecture.validate()?;
        Ok(Self { architecture, deform, wrap, cut, unwrap })
    }
}

/// `s×s` lattice over `[-1, 1]²` including the borders, row-major (u fastest).
pub fn make_grid(n: usize) -> Result<Matrix> {
    let s = (n as f64).sqrt().round() as usize;
    if s < 2 || s * s != n {
        return Err(Error::InvalidArgument(format!("grid size {n} is not a square of an integer >= 2")));
    }
    let step = |i: usize| if i == s - 1 { 1.0 } else { -1.0 + 2.0 * i as f64 / (s - 1) as f64 };
    Ok(Matrix::from_fn(n, 2, |r, c| if c == 0 { step(r % s) } else { step(r / s) }))
}

pub(crate) fn rows3(m: &Matrix) -> Vec<[f64; 3]> {
    m.iter_rows().map(|r| [r[0], r[1], r[2]]).collect()
}

pub(crate) fn rows2(m: &Matrix) -> Vec<[f64; 2]> {
    m.iter_rows().map(|r| [r[0], r[1]]).collect()
}

pub(crate) fn matrix3(points: &[[f64; 3]]) -> Matrix {
    Matrix::from_rows(points)
}
