//! Stacked dense layers: LeakyReLU on every layer but the last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::tape::{dense_forward, Tape, Var, LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    widths: Vec<usize>,
}

impl NetSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "a network needs at least two positive widths, got {widths:?}"
            )));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn activation_slope(&self) -> f64 {
        LEAKY_SLOPE
    }

    /// Whether layer `l` is followed by the activation.
    pub fn is_hidden(&self, l: usize) -> bool {
        l + 1 < self.num_layers()
    }

    pub fn num_parameters(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    layers: Vec<Layer>,
}

impl ParamStore {
    /// Uniform `±sqrt(6 / fan_in)` weights, zero biases. With `zero_final`
    /// the last layer is all zeros, so the network outputs exactly 0.
    pub fn init(spec: &NetSpec, seed: u64, zero_final: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.num_layers();
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight = if zero_final && l + 1 == n {
                    Matrix::zeros(fan_out, fan_in)
                } else {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..=bound))
                };
                Layer { weight, bias: Matrix::zeros(1, fan_out) }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(spec: &NetSpec, layers: Vec<Layer>) -> Result<Self> {
        let store = Self { layers };
        store.check(spec)?;
        Ok(store)
    }

    pub fn check(&self, spec: &NetSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::Shape(format!(
                "{} layers stored for a {}-layer spec",
                self.layers.len(),
                spec.num_layers()
            )));
        }
        for (l, (layer, w)) in self.layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[1], w[0]) || layer.bias.shape() != (1, w[1]) {
                return Err(Error::Shape(format!("layer {l} does not match widths {w:?}")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Weight and bias blocks in optimizer order: `w0, b0, w1, b1, …`.
    pub fn blocks(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(Matrix::is_finite)
    }

    /// Puts every weight and bias on the tape as a leaf.
    pub fn register(&self, tape: &mut Tape) -> NetVars {
        NetVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }
}

/// Tape handles of one network's parameters.
#[derive(Clone, Debug)]
pub struct NetVars {
    layers: Vec<(Var, Var)>,
}

impl NetVars {
    /// Handles in [`ParamStore::blocks`] order.
    pub fn blocks(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Outputs of every layer of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    layers: Vec<Var>,
}

impl Trace {
    pub fn output(&self) -> Var {
        *self.layers.last().unwrap()
    }
}

pub fn mlp_forward(spec: &NetSpec, vars: &NetVars, x: Var, tape: &mut Tape) -> Result<Trace> {
    if tape.value(x).cols() != spec.input_width() {
        return Err(Error::Shape(format!(
            "network expects {} input columns, got {}",
            spec.input_width(),
            tape.value(x).cols()
        )));
    }
    let mut h = x;
    let mut layers = Vec::with_capacity(spec.num_layers());
    for (l, &(w, b)) in vars.layers.iter().enumerate() {
        h = tape.dense(h, w, b, spec.is_hidden(l))?;
        layers.push(h);
    }
    Ok(Trace { layers })
}

/// Directional derivative of a recorded forward pass along the per-row
/// tangent `dx` (same shape as the input). The result is itself a tape node.
pub fn mlp_tangent(spec: &NetSpec, vars: &NetVars, trace: &Trace, dx: Var, tape: &mut Tape) -> Result<Var> {
    if tape.value(dx).cols() != spec.input_width() {
        return Err(Error::Shape("tangent width differs from network input".into()));
    }
    let mut t = dx;
    for (l, (&(w, _), &primal)) in vars.layers.iter().zip(&trace.layers).enumerate() {
        t = tape.dense_tangent(t, w, primal, spec.is_hidden(l))?;
    }
    Ok(t)
}

/// Forward pass plus the directional derivative along one fixed direction
/// shared by all rows. Returns `(output, jvp)`.
pub fn jvp(spec: &NetSpec, vars: &NetVars, x: Var, direction: &[f64], tape: &mut Tape) -> Result<(Var, Var)> {
    if direction.len() != spec.input_width() {
        return Err(Error::Shape(format!(
            "direction has {} entries, network input is {}",
            direction.len(),
            spec.input_width()
        )));
    }
    let trace = mlp_forward(spec, vars, x, tape)?;
    let rows = tape.value(x).rows();
    let dx = tape.leaf(Matrix::from_fn(rows, direction.len(), |_, j| direction[j]));
    let t = mlp_tangent(spec, vars, &trace, dx, tape)?;
    Ok((trace.output(), t))
}

/// Evaluates without a tape.
pub fn mlp_eval(spec: &NetSpec, params: &ParamStore, x: &Matrix) -> Result<Matrix> {
    if x.cols() != spec.input_width() {
        return Err(Error::Shape(format!(
            "network expects {} input columns, got {}",
            spec.input_width(),
            x.cols()
        )));
    }
    let mut h = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        h = dense_forward(&h, &layer.weight, &layer.bias, spec.is_hidden(l));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::leaky_relu;

    #[test]
    fn spec_validation() {
        assert!(NetSpec::new(vec![3]).is_err());
        assert!(NetSpec::new(vec![3, 0, 2]).is_err());
        let s = NetSpec::new(vec![2, 512, 64]).unwrap();
        assert_eq!(s.num_parameters(), 2 * 512 + 512 + 512 * 64 + 64);
        assert_eq!(s.activation_slope(), 0.01);
    }

    #[test]
    fn zero_final_outputs_zero() {
        let spec = NetSpec::new(vec![3, 16, 16, 2]).unwrap();
        let p = ParamStore::init(&spec, 5, true);
        let x = Matrix::from_fn(7, 3, |i, j| (i as f64).sin() * 3.0 + j as f64);
        let y = mlp_eval(&spec, &p, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = NetSpec::new(vec![512, 64, 4]).unwrap();
        let a = ParamStore::init(&spec, 11, false);
        let b = ParamStore::init(&spec, 11, false);
        assert_eq!(a, b);
        let bound = (6.0f64 / 512.0).sqrt();
        assert!((bound - 0.1083).abs() < 1e-4);
        assert!(a.layers()[0].weight.data().iter().all(|w| w.abs() <= bound));
        assert!(a.blocks().skip(1).step_by(2).all(|b| b.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unit_weights_show_leaky_slope() {
        // 1 -> 1 -> 1 with unit weights: output = leaky(x)
        let spec = NetSpec::new(vec![1, 1, 1]).unwrap();
        let one = Layer { weight: Matrix::scalar(1.0), bias: Matrix::zeros(1, 1) };
        let p = ParamStore::from_layers(&spec, vec![one.clone(), one]).unwrap();
        let y = mlp_eval(&spec, &p, &Matrix::from_rows(&[[-1.0], [2.0]])).unwrap();
        assert_eq!(y.data(), &[-0.01, 2.0]);
    }

    #[test]
    fn hand_evaluated_two_three_one() {
        let spec = NetSpec::new(vec![2, 3, 1]).unwrap();
        let w0 = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.75, 0.1]]);
        let b0 = Matrix::from_rows(&[[0.1, -0.2, 0.3]]);
        let w1 = Matrix::from_rows(&[[1.5, -0.5, 2.0]]);
        let b1 = Matrix::from_rows(&[[-0.05]]);
        let p = ParamStore::from_layers(
            &spec,
            vec![Layer { weight: w0.clone(), bias: b0.clone() }, Layer { weight: w1.clone(), bias: b1.clone() }],
        )
        .unwrap();
        let x = [[0.3, -0.7], [-1.2, 0.4]];
        let y = mlp_eval(&spec, &p, &Matrix::from_rows(&x)).unwrap();
        for (r, xr) in x.iter().enumerate() {
            let mut out = b1.get(0, 0);
            for h in 0..3 {
                let pre = w0.get(h, 0) * xr[0] + w0.get(h, 1) * xr[1] + b0.get(0, h);
                out += w1.get(0, h) * leaky_relu(pre);
            }
            assert!((y.get(r, 0) - out).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let spec = NetSpec::new(vec![2, 4, 1]).unwrap();
        let p = ParamStore::init(&spec, 0, false);
        assert!(mlp_eval(&spec, &p, &Matrix::zeros(3, 3)).is_err());
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let x = tape.leaf(Matrix::zeros(3, 3));
        assert!(mlp_forward(&spec, &vars, x, &mut tape).is_err());
    }

    #[test]
    fn linear_map_jvp_is_weight_column() {
        let spec = NetSpec::new(vec![3, 2]).unwrap();
        let p = ParamStore::init(&spec, 9, false);
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let x = tape.leaf(Matrix::from_fn(4, 3, |i, j| (i * j) as f64 - 1.0));
        let (_, t) = jvp(&spec, &vars, x, &[1.0, 0.0, 0.0], &mut tape).unwrap();
        let w = &p.layers()[0].weight;
        for row in tape.value(t).iter_rows() {
            assert_eq!(row, &[w.get(0, 0), w.get(1, 0)]);
        }
    }
}
