//! Matrix-valued Wengert list.
//!
//! Every node holds an `n×c` matrix. Dense layers are recorded as single fused
//! nodes (affine map plus optional LeakyReLU), and forward-mode tangents of
//! those layers are recorded as ordinary nodes too. A reverse sweep over a
//! loss built from tangents therefore differentiates the Jacobian entries
//! themselves (forward-over-reverse), which is what the conformal loss needs.
//!
//! ```
//! use flatten_core::autodiff::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::from_rows(&[[1.0, 2.0]]));
//! let sq = tape.square(x);
//! let y = tape.sum(sq);
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

use crate::error::{Error, Result};

use super::matrix::{gemm, matmul, Matrix};

/// Negative-side slope of every hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Derivative of [`leaky_relu`], read off the sign of either its input or its
/// output (they agree). At exactly zero the positive slope is used.
#[inline]
pub fn leaky_slope(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `act(x Wᵀ + b)`
    Dense { x: Var, w: Var, b: Var, leaky: bool },
    /// `(dx Wᵀ) ⊙ act'(primal)`; `primal` is the matching `Dense` node.
    DenseTangent { dx: Var, w: Var, primal: Var, leaky: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Concat(Var, Var),
    Columns { x: Var, start: usize },
    Gather { x: Var, rows: Vec<usize> },
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    HingeBelow { x: Var, threshold: f64 },
    RowSum(Var),
    RowNorm(Var),
    NormalizeRows(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    swept: bool,
}

/// Gradients of one reverse sweep. Only leaves keep their adjoints.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros of the right shape if the root does not depend on it.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Matrix::zeros(r, c)
        })
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(tape: &Tape, a: Var, b: Var, what: &str) {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    assert_eq!(sa, sb, "{what}: operand shapes differ");
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter. Its gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var, leaky: bool) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.shape() != (1, wv.rows()) {
            return Err(Error::Shape(format!(
                "dense layer: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let out = dense_forward(xv, wv, bv, leaky);
        Ok(self.push(out, Op::Dense { x, w, b, leaky }))
    }

    pub fn dense_tangent(&mut self, dx: Var, w: Var, primal: Var, leaky: bool) -> Result<Var> {
        let (dv, wv, pv) = (self.value(dx), self.value(w), self.value(primal));
        if dv.cols() != wv.cols() || pv.shape() != (dv.rows(), wv.rows()) {
            return Err(Error::Shape(format!(
                "dense tangent: tangent {:?}, weight {:?}, primal {:?}",
                dv.shape(),
                wv.shape(),
                pv.shape()
            )));
        }
        let mut out = matmul(dv, false, wv, true);
        if leaky {
            for (o, &p) in out.data_mut().iter_mut().zip(pv.data()) {
                *o *= leaky_slope(p);
            }
        }
        Ok(self.push(out, Op::DenseTangent { dx, w, primal, leaky }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b, "add");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b, "sub");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        let v = self.value(a).map(|x| x + shift);
        self.push(v, Op::Offset(a))
    }

    /// Column concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).rows(), self.value(b).rows(), "concat: row counts differ");
        let v = self.value(a).hcat(self.value(b));
        self.push(v, Op::Concat(a, b))
    }

    pub fn columns(&mut self, x: Var, start: usize, end: usize) -> Var {
        assert!(start <= end && end <= self.value(x).cols(), "columns: range out of bounds");
        let v = self.value(x).select_cols(start, end);
        self.push(v, Op::Columns { x, start })
    }

    /// Row `i` of the result is row `rows[i]` of `x`. The index set is fixed
    /// (not differentiated), which is how nearest-neighbor matchings enter losses.
    pub fn gather(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let v = self.value(x).select_rows(&rows);
        self.push(v, Op::Gather { x, rows })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.push(v, Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| t.max(0.0).sqrt());
        self.push(v, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| t * t);
        self.push(v, Op::Square(x))
    }

    /// `max(0, threshold - x)` elementwise.
    pub fn hinge_below(&mut self, x: Var, threshold: f64) -> Var {
        let v = self.value(x).map(|t| (threshold - t).max(0.0));
        self.push(v, Op::HingeBelow { x, threshold })
    }

    /// `n×c → n×1`
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.iter_rows().map(|r| r.iter().sum()).collect();
        let v = Matrix::from_vec(xv.rows(), 1, data).expect("row sums");
        self.push(v, Op::RowSum(x))
    }

    /// Euclidean norm of each row, `n×c → n×1`.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.iter_rows().map(|r| r.iter().map(|t| t * t).sum::<f64>().sqrt()).collect();
        let v = Matrix::from_vec(xv.rows(), 1, data).expect("row norms");
        self.push(v, Op::RowNorm(x))
    }

    /// Scales each row to unit length; all-zero rows stay zero.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let n = row.iter().map(|t| t * t).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|t| *t /= n);
            }
        }
        self.push(v, Op::NormalizeRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.data().len().max(1) as f64;
        let v = Matrix::scalar(xv.sum() / n);
        self.push(v, Op::Mean(x))
    }

    /// Reverse sweep from a scalar root. A tape can be swept once.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.swept {
            return Err(Error::TapeConsumed);
        }
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        self.swept = true;

        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match node.op {
            Op::Leaf => unreachable!(),
            Op::Dense { x, w, b, leaky } => {
                let g = if leaky { apply_slope(g, &node.value) } else { g };
                accumulate_gemm(grads, w, &g, true, val(x), false, val(w).shape());
                let mut db = Matrix::zeros(1, g.cols());
                for r in g.iter_rows() {
                    for (d, &v) in db.data_mut().iter_mut().zip(r) {
                        *d += v;
                    }
                }
                accumulate(grads, b, db);
                accumulate_gemm(grads, x, &g, false, val(w), false, val(x).shape());
            }
            Op::DenseTangent { dx, w, primal, leaky } => {
                let g = if leaky { apply_slope(g, val(primal)) } else { g };
                accumulate_gemm(grads, w, &g, true, val(dx), false, val(w).shape());
                accumulate_gemm(grads, dx, &g, false, val(w), false, val(dx).shape());
            }
            Op::Add(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g);
            }
            Op::Sub(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.map(|t| -t));
            }
            Op::Mul(a, b) => {
                accumulate(grads, a, g.zip_map(val(b), |t, y| t * y));
                accumulate(grads, b, g.zip_map(val(a), |t, x| t * x));
            }
            Op::Scale(a, f) => accumulate(grads, a, g.map(|t| t * f)),
            Op::Offset(a) => accumulate(grads, a, g),
            Op::Concat(a, b) => {
                let split = val(a).cols();
                accumulate(grads, a, g.select_cols(0, split));
                accumulate(grads, b, g.select_cols(split, g.cols()));
            }
            Op::Columns { x, start } => {
                let xv = val(x);
                let mut d = Matrix::zeros(xv.rows(), xv.cols());
                for i in 0..g.rows() {
                    d.row_mut(i)[start..start + g.cols()].copy_from_slice(g.row(i));
                }
                accumulate(grads, x, d);
            }
            Op::Gather { x, ref rows } => {
                let xv = val(x);
                let mut d = Matrix::zeros(xv.rows(), xv.cols());
                for (i, &src) in rows.iter().enumerate() {
                    for (t, &v) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                        *t += v;
                    }
                }
                accumulate(grads, x, d);
            }
            Op::Abs(x) => accumulate(grads, x, g.zip_map(val(x), |t, v| t * sign(v))),
            Op::Sqrt(x) => {
                let d = g.zip_map(&node.value, |t, s| if s > 0.0 { t * 0.5 / s } else { 0.0 });
                accumulate(grads, x, d);
            }
            Op::Square(x) => accumulate(grads, x, g.zip_map(val(x), |t, v| 2.0 * t * v)),
            Op::HingeBelow { x, threshold } => {
                let d = g.zip_map(val(x), |t, v| if v < threshold { -t } else { 0.0 });
                accumulate(grads, x, d);
            }
            Op::RowSum(x) => {
                let xv = val(x);
                let d = Matrix::from_fn(xv.rows(), xv.cols(), |i, _| g.get(i, 0));
                accumulate(grads, x, d);
            }
            Op::RowNorm(x) => {
                let xv = val(x);
                let d = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| {
                    let n = node.value.get(i, 0);
                    if n > 0.0 {
                        g.get(i, 0) * xv.get(i, j) / n
                    } else {
                        0.0
                    }
                });
                accumulate(grads, x, d);
            }
            Op::NormalizeRows(x) => {
                // d(x/|x|) = (I - y yᵀ) dx / |x|
                let xv = val(x);
                let y = &node.value;
                let mut d = Matrix::zeros(xv.rows(), xv.cols());
                for i in 0..xv.rows() {
                    let n = xv.row(i).iter().map(|t| t * t).sum::<f64>().sqrt();
                    if n == 0.0 {
                        continue;
                    }
                    let gy: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for j in 0..xv.cols() {
                        d.set(i, j, (g.get(i, j) - gy * y.get(i, j)) / n);
                    }
                }
                accumulate(grads, x, d);
            }
            Op::Sum(x) => {
                let (r, c) = val(x).shape();
                accumulate(grads, x, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(x) => {
                let (r, c) = val(x).shape();
                let n = (r * c).max(1) as f64;
                accumulate(grads, x, Matrix::filled(r, c, g.item() / n));
            }
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn apply_slope(mut g: Matrix, reference: &Matrix) -> Matrix {
    for (t, &r) in g.data_mut().iter_mut().zip(reference.data()) {
        *t *= leaky_slope(r);
    }
    g
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &d),
        slot @ None => *slot = Some(d),
    }
}

/// `grads[v] += op(a) op(b)` without allocating when the slot already exists.
fn accumulate_gemm(
    grads: &mut [Option<Matrix>],
    v: Var,
    a: &Matrix,
    trans_a: bool,
    b: &Matrix,
    trans_b: bool,
    shape: (usize, usize),
) {
    let slot = &mut grads[v.0];
    match slot {
        Some(existing) => gemm(1.0, a, trans_a, b, trans_b, 1.0, existing),
        None => {
            let mut m = Matrix::zeros(shape.0, shape.1);
            gemm(1.0, a, trans_a, b, trans_b, 0.0, &mut m);
            *slot = Some(m);
        }
    }
}

/// `act(x Wᵀ + b)` evaluated without recording; shared with the tape so
/// inference and training produce identical bits.
pub fn dense_forward(x: &Matrix, w: &Matrix, b: &Matrix, leaky: bool) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    gemm(1.0, x, false, w, true, 0.0, &mut out);
    let bias = b.data();
    let cols = out.cols();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        let t = *v + bias[k % cols];
        *v = if leaky { leaky_relu(t) } else { t };
    }
    out
}
