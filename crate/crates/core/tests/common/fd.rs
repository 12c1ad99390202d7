//! Finite-difference oracles with an independent scalar forward pass.
//!
//! Networks are piecewise linear, so every difference quotient is taken
//! inside one activation region: the hidden-unit sign pattern is recorded at
//! every probe and a one-sided stencil replaces the central one when a probe
//! lands in another region.

use flatten_core::autodiff::{jvp, mlp_forward, Layer, NetSpec, ParamStore};
use flatten_core::model::{loss_conformal, Architecture, FlattenModel, Reduction};
use flatten_core::{Matrix, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Pattern = Vec<bool>;

/// Dense layers as plain nested vectors: `w[out][in]`, `b[out]`.
#[derive(Clone, Debug)]
pub struct OracleNet {
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl OracleNet {
    pub fn from_layers(layers: &[Layer]) -> Self {
        let layers = layers
            .iter()
            .map(|l| {
                let w = (0..l.weight.rows()).map(|i| l.weight.row(i).to_vec()).collect();
                (w, l.bias.data().to_vec())
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, x: &[f64], pattern: &mut Pattern) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let mut next: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bias)| row.iter().zip(&h).map(|(a, c)| a * c).sum::<f64>() + bias)
                .collect();
            if l < last {
                for t in &mut next {
                    pattern.push(*t > 0.0);
                    if *t <= 0.0 {
                        *t *= 0.01;
                    }
                }
            }
            h = next;
        }
        h
    }
}

/// Derivative at 0 of a vector-valued piecewise-smooth function.
pub fn fd_vec(f: &mut dyn FnMut(f64) -> (Vec<f64>, Pattern), h: f64) -> Vec<f64> {
    let (f0, p0) = f(0.0);
    let mut h = h;
    for _ in 0..6 {
        let (fp, pp) = f(h);
        let (fm, pm) = f(-h);
        if pp == p0 && pm == p0 {
            return fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        }
        if pp == p0 {
            let (f2, p2) = f(2.0 * h);
            if p2 == p0 {
                return (0..f0.len()).map(|i| (-3.0 * f0[i] + 4.0 * fp[i] - f2[i]) / (2.0 * h)).collect();
            }
        }
        if pm == p0 {
            let (f2, p2) = f(-2.0 * h);
            if p2 == p0 {
                return (0..f0.len()).map(|i| (3.0 * f0[i] - 4.0 * fm[i] + f2[i]) / (2.0 * h)).collect();
            }
        }
        h *= 0.1;
    }
    panic!("no difference stencil stays inside one activation region");
}

pub fn fd_scalar(f: &mut dyn FnMut(f64) -> (f64, Pattern), h: f64) -> f64 {
    fd_vec(
        &mut |t| {
            let (v, p) = f(t);
            (vec![v], p)
        },
        h,
    )[0]
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err_floor(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b)).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        norm(&d) / scale
    }
}

/// Largest `|a − b| / max(1, |a|)` over entries.
pub fn entry_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    rel_err_floor(a, b, 0.0)
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for layer in store.layers_mut() {
        let bound = (6.0 / layer.weight.cols() as f64).sqrt();
        layer.weight.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        layer.bias.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FdErrors {
    pub params: f64,
    pub inputs: f64,
}

/// Loss `Σ r ⊙ y + ½ Σ y²` of a random MLP (widths ≤ 16, depth ≤ 4); tape gradients against
/// difference quotients for every weight, bias and input entry.
pub fn random_mlp_errors(seed: u64) -> FdErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=4);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=16)).collect();
    let rows = rng.gen_range(1..=5);
    let spec = NetSpec::new(widths.clone()).unwrap();
    let mut params = ParamStore::init(&spec, seed, false);
    randomize(&mut params, &mut rng);
    let x = Matrix::from_fn(rows, widths[0], |_, _| rng.gen_range(-1.0..1.0));
    let r = Matrix::from_fn(rows, *widths.last().unwrap(), |_, _| rng.gen_range(-1.0..1.0));

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = mlp_forward(&spec, &vars, xv, &mut tape).unwrap().output();
    let rv = tape.leaf(r.clone());
    let lin = tape.mul(out, rv);
    let lin = tape.sum(lin);
    let sq = tape.square(out);
    let sq = tape.sum(sq);
    let sq = tape.scale(sq, 0.5);
    let loss = tape.add(lin, sq);
    let grads = tape.backward(loss).unwrap();

    let oracle_loss = |layers: &[Layer], x: &Matrix| -> (f64, Pattern) {
        let net = OracleNet::from_layers(layers);
        let mut pattern = Vec::new();
        let mut total = 0.0;
        for i in 0..x.rows() {
            let y = net.forward(x.row(i), &mut pattern);
            total += y.iter().zip(r.row(i)).map(|(a, b)| a * b + 0.5 * a * a).sum::<f64>();
        }
        (total, pattern)
    };

    let mut errs = FdErrors::default();
    for (bi, var) in vars.blocks().enumerate() {
        let analytic = grads.get_or_zeros(&tape, var);
        let len = analytic.data().len();
        let numeric: Vec<f64> = (0..len)
            .map(|e| {
                fd_scalar(
                    &mut |t| {
                        let mut p = params.clone();
                        p.blocks_mut().nth(bi).unwrap().data_mut()[e] += t;
                        oracle_loss(p.layers(), &x)
                    },
                    1e-6,
                )
            })
            .collect();
        errs.params = errs.params.max(rel_err(analytic.data(), &numeric)).max(entry_err(analytic.data(), &numeric));
    }
    let analytic = grads.get_or_zeros(&tape, xv);
    let numeric: Vec<f64> = (0..x.data().len())
        .map(|e| {
            fd_scalar(
                &mut |t| {
                    let mut xp = x.clone();
                    xp.data_mut()[e] += t;
                    oracle_loss(params.layers(), &xp)
                },
                1e-6,
            )
        })
        .collect();
    errs.inputs = rel_err(analytic.data(), &numeric).max(entry_err(analytic.data(), &numeric));
    errs
}

/// Directional derivatives from `jvp` against difference quotients, plus
/// linearity of the tangent map in the direction.
pub fn jvp_errors(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=4);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=16)).collect();
    let rows = rng.gen_range(1..=5);
    let spec = NetSpec::new(widths.clone()).unwrap();
    let mut params = ParamStore::init(&spec, seed, false);
    randomize(&mut params, &mut rng);
    let x = Matrix::from_fn(rows, widths[0], |_, _| rng.gen_range(-1.0..1.0));
    let d1: Vec<f64> = (0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d2: Vec<f64> = (0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let mix: Vec<f64> = d1.iter().zip(&d2).map(|(p, q)| a * p + b * q).collect();

    let tangent = |dir: &[f64]| -> Matrix {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let xv = tape.leaf(x.clone());
        let (_, t) = jvp(&spec, &vars, xv, dir, &mut tape).unwrap();
        tape.value(t).clone()
    };
    let (t1, t2, tm) = (tangent(&d1), tangent(&d2), tangent(&mix));
    let combo: Vec<f64> = t1.data().iter().zip(t2.data()).map(|(p, q)| a * p + b * q).collect();
    let linearity = rel_err(tm.data(), &combo);

    let net = OracleNet::from_layers(params.layers());
    let numeric = fd_vec(
        &mut |t| {
            let mut pattern = Vec::new();
            let mut out = Vec::new();
            for i in 0..rows {
                let xi: Vec<f64> = x.row(i).iter().zip(&d1).map(|(v, d)| v + t * d).collect();
                out.extend(net.forward(&xi, &mut pattern));
            }
            (out, pattern)
        },
        1e-6,
    );
    (rel_err(t1.data(), &numeric), linearity)
}

/// Wrap-Net position map evaluated by the oracle: `head([embed(uv) | uv])[0..3]`.
fn wrap_positions(embed: &OracleNet, head: &OracleNet, uv: [f64; 2], pattern: &mut Pattern) -> Vec<f64> {
    let mut code = embed.forward(&uv, pattern);
    code.extend_from_slice(&uv);
    head.forward(&code, pattern)[..3].to_vec()
}

/// Mean eigenvalue gap of `JᵀJ` over the rows of `uv`, with `J` itself
/// taken by differences inside the activation region of each row.
fn oracle_conformal(embed: &[Layer], head: &[Layer], uv: &[[f64; 2]]) -> (f64, Pattern) {
    let (e, h) = (OracleNet::from_layers(embed), OracleNet::from_layers(head));
    let mut pattern = Vec::new();
    let mut total = 0.0;
    for &p in uv {
        wrap_positions(&e, &h, p, &mut pattern);
        let col = |axis: usize| {
            fd_vec(
                &mut |t| {
                    let mut q = p;
                    q[axis] += t;
                    let mut pat = Vec::new();
                    (wrap_positions(&e, &h, q, &mut pat), pat)
                },
                1e-2,
            )
        };
        let (ju, jv) = (col(0), col(1));
        let a: f64 = ju.iter().map(|x| x * x).sum();
        let b: f64 = ju.iter().zip(&jv).map(|(x, y)| x * y).sum();
        let c: f64 = jv.iter().map(|x| x * x).sum();
        total += ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    }
    (total / uv.len() as f64, pattern)
}

/// Parameter gradient of the conformal objective through Wrap-Net Jacobian
/// tangents, against nested differences of the oracle. Returns the largest
/// per-block relative error.
pub fn conformal_second_order_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = rng.gen_range(3..=6);
    let latent = rng.gen_range(2..=4);
    let mut model = FlattenModel::new(Architecture::scaled(hidden, latent), seed).unwrap();
    randomize(&mut model.wrap.embed.params, &mut rng);
    randomize(&mut model.wrap.head.params, &mut rng);
    let rows = rng.gen_range(1..=6);
    let uv: Vec<[f64; 2]> = (0..rows).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();

    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let x = tape.leaf(Matrix::from_rows(&uv));
    let w = model.wrap_on(&vars, x, &mut tape).unwrap();
    let (ju, jv) = model.wrap_jacobian_on(&vars, &w, &mut tape).unwrap();
    let loss = loss_conformal(&mut tape, &[(ju, jv)], Reduction::Mean);
    let grads = tape.backward(loss).unwrap();

    let (lo, _) = oracle_conformal(model.wrap.embed.params.layers(), model.wrap.head.params.layers(), &uv);
    assert!((tape.value(loss).item() - lo).abs() <= 1e-8 * lo.max(1.0));

    let all = vars.blocks();
    let names = model.block_names();
    let embed_blocks = model.wrap.embed.params.blocks().count();
    let first = names.iter().position(|n| n.starts_with("wrap.")).unwrap();
    let mut blocks = Vec::new();
    for k in 0..embed_blocks + model.wrap.head.params.blocks().count() {
        let analytic = grads.get_or_zeros(&tape, all[first + k]);
        let numeric: Vec<f64> = (0..analytic.data().len())
            .map(|e| {
                fd_scalar(
                    &mut |t| {
                        let mut em = model.wrap.embed.params.clone();
                        let mut hd = model.wrap.head.params.clone();
                        if k < embed_blocks {
                            em.blocks_mut().nth(k).unwrap().data_mut()[e] += t;
                        } else {
                            hd.blocks_mut().nth(k - embed_blocks).unwrap().data_mut()[e] += t;
                        }
                        oracle_conformal(em.layers(), hd.layers(), &uv)
                    },
                    1e-4,
                )
            })
            .collect();
        blocks.push((analytic.into_vec(), numeric));
    }
    // biases do not move a piecewise-linear Jacobian, so those blocks are
    // zero up to roundoff and are measured against the whole gradient
    let whole: Vec<f64> = blocks.iter().flat_map(|(a, _)| a.iter().copied()).collect();
    let floor = 1e-3 * norm(&whole);
    let mut worst: f64 = 0.0;
    for (a, n) in &blocks {
        worst = worst.max(rel_err_floor(a, n, floor)).max(entry_err(a, n));
    }
    worst
}
