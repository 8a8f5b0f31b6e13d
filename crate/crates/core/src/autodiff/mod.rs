//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Values live on a [`Tape`] and are addressed by copyable [`Var`] handles.
//! An operation is recorded for the backward pass only when one of its
//! inputs requires a gradient; everything else is a plain constant, so a
//! forward pass with no trainable inputs leaves no recorded operations.
//!
//! Column vectors are `(n, 1)` matrices.

mod check;
mod optim;
mod params;

pub use check::{grad_check, grad_check_params, relative_error};
pub use optim::Adam;
pub use params::{ParamId, ParamStore};

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A dense matrix with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Rejects non-finite values and mismatched lengths.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "tensor",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Tensor {
            rows,
            cols,
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: Arc::new(vec![0.0; rows * cols]),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn column(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(n, 1, data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn shared(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddMany(Vec<Var>),
    Concat(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Cos(Var),
    Softplus(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Arc<Vec<f64>>,
    op: Op,
    grad: bool,
}

/// Gradients of the leaves created with [`Tape::leaf`], returned by
/// [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_leaf: HashMap<Var, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.by_leaf.get(&v).map(Vec::as_slice)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    recorded: usize,
    checked: bool,
    no_grad: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A tape on which parameters never require gradients.
    pub fn no_grad() -> Self {
        Tape {
            no_grad: true,
            ..Tape::default()
        }
    }

    /// When on, every operation fails on non-finite outputs.
    pub fn set_checked(&mut self, on: bool) {
        self.checked = on;
    }

    pub fn is_no_grad(&self) -> bool {
        self.no_grad
    }

    /// Operations recorded for the backward pass since the last clear.
    pub fn recorded_ops(&self) -> usize {
        self.recorded
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.recorded = 0;
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Copies a value out as a gradient-free tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            rows: n.rows,
            cols: n.cols,
            data: Arc::clone(&n.value),
            requires_grad: false,
            grad: None,
        }
    }

    /// Scalar value of a `(1,1)` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, grad: bool, name: &'static str) -> Result<Var> {
        if self.checked && value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.into()));
        }
        if grad {
            self.recorded += 1;
        }
        let op = if grad { op } else { Op::Const };
        self.nodes.push(Node {
            rows,
            cols,
            value: Arc::new(value),
            op,
            grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant (never differentiated).
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            rows: t.rows,
            cols: t.cols,
            value: t.shared(),
            op: Op::Const,
            grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant_column(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.nodes.push(Node {
            rows: n,
            cols: 1,
            value: Arc::new(data),
            op: Op::Const,
            grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(&Tensor::zeros(rows, cols))
    }

    /// An input whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            rows: t.rows,
            cols: t.cols,
            value: t.shared(),
            op: if requires_grad { Op::Leaf } else { Op::Const },
            grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// The tape node for a stored parameter (one per parameter per tape).
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.tensor(id);
        let grad = t.requires_grad && !self.no_grad;
        self.nodes.push(Node {
            rows: t.rows,
            cols: t.cols,
            value: t.shared(),
            op: if grad { Op::Param(id) } else { Op::Const },
            grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: (m, k),
                rhs: (k2, n),
            });
        }
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, y) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * y;
                }
            }
        }
        let g = self.node(a).grad || self.node(b).grad;
        self.push(m, n, out, Op::MatMul(a, b), g, "matmul")
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        let (r, c) = self.same_shape(op, a, b)?;
        let out = self.node(a).value.iter().zip(self.node(b).value.iter()).map(|(x, y)| f(*x, *y)).collect();
        let g = self.node(a).grad || self.node(b).grad;
        self.push(r, c, out, rec, g, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Sum of same-shaped values, accumulated in the given order.
    pub fn add_many(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::InvalidParam("add_many of nothing".into()))?;
        let (r, c) = self.shape(first);
        let mut out = vec![0.0; r * c];
        for &x in xs {
            self.same_shape("add_many", first, x)?;
            for (o, v) in out.iter_mut().zip(self.node(x).value.iter()) {
                *o += v;
            }
        }
        let g = xs.iter().any(|&x| self.node(x).grad);
        self.push(r, c, out, Op::AddMany(xs.to_vec()), g, "add_many")
    }

    /// Stacks values with the same column count vertically.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::InvalidParam("concat of nothing".into()))?;
        let cols = self.shape(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &x in xs {
            let (r, c) = self.shape(x);
            if c != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: self.shape(first),
                    rhs: (r, c),
                });
            }
            rows += r;
            out.extend_from_slice(&self.node(x).value);
        }
        let g = xs.iter().any(|&x| self.node(x).grad);
        self.push(rows, cols, out, Op::Concat(xs.to_vec()), g, "concat_rows")
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, rec: Op, name: &'static str) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.node(a).value.iter().map(|&x| f(x)).collect();
        let g = self.node(a).grad;
        self.push(r, c, out, rec, g, name)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| x.max(0.0), Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, sigmoid, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::tanh, Op::Tanh(a), "tanh")
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::cos, Op::Cos(a), "cos")
    }

    /// `ln(1 + eˣ)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.map(a, softplus, Op::Softplus(a), "softplus")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, |x| c * x, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, |x| x + c, Op::AddScalar(a), "add_scalar")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a).value.iter().sum();
        let g = self.node(a).grad;
        self.push(1, 1, vec![s], Op::Sum(a), g, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.node(a).value;
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let g = self.node(a).grad;
        self.push(1, 1, vec![s], Op::Mean(a), g, "mean")
    }

    /// Reverse pass from a `(1,1)` loss. Parameter gradients are added to
    /// `store`; leaf gradients are returned. The tape is cleared.
    pub fn backward(&mut self, loss: Var, store: Option<&mut ParamStore>) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut out = Gradients::default();
        let mut store = store;
        if self.node(loss).grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Leaf => {
                    out.by_leaf.insert(Var(i), g);
                }
                Op::Param(id) => {
                    if let Some(s) = store.as_deref_mut() {
                        s.accumulate_grad(*id, &g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = node.cols;
                    if self.node(*a).grad {
                        let bv = &self.node(*b).value;
                        let mut ga = vec![0.0; m * k];
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                ga[r * k + p] = gr.iter().zip(&bv[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
                            }
                        }
                        acc(&mut grads, *a, ga);
                    }
                    if self.node(*b).grad {
                        let av = &self.node(*a).value;
                        let mut gb = vec![0.0; k * n];
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let x = av[r * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                    *o += x * y;
                                }
                            }
                        }
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    self.pass(&mut grads, *a, &g);
                    self.pass(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.pass(&mut grads, *a, &g);
                    if self.node(*b).grad {
                        acc(&mut grads, *b, g.iter().map(|x| -x).collect());
                    }
                }
                Op::Mul(a, b) => {
                    if self.node(*a).grad {
                        let bv = &self.node(*b).value;
                        acc(&mut grads, *a, g.iter().zip(bv.iter()).map(|(x, y)| x * y).collect());
                    }
                    if self.node(*b).grad {
                        let av = &self.node(*a).value;
                        acc(&mut grads, *b, g.iter().zip(av.iter()).map(|(x, y)| x * y).collect());
                    }
                }
                Op::AddMany(xs) => {
                    for &x in xs {
                        self.pass(&mut grads, x, &g);
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let len = self.node(x).value.len();
                        if self.node(x).grad {
                            acc(&mut grads, x, g[off..off + len].to_vec());
                        }
                        off += len;
                    }
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    let ga = g.iter().zip(y.iter()).map(|(d, y)| if *y > 0.0 { *d } else { 0.0 }).collect();
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g.iter().zip(y.iter()).map(|(d, y)| d * y * (1.0 - y)).collect());
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g.iter().zip(y.iter()).map(|(d, y)| d * (1.0 - y * y)).collect());
                }
                Op::Cos(a) => {
                    let x = &self.node(*a).value;
                    acc(&mut grads, *a, g.iter().zip(x.iter()).map(|(d, x)| -d * x.sin()).collect());
                }
                Op::Softplus(a) => {
                    let x = &self.node(*a).value;
                    acc(&mut grads, *a, g.iter().zip(x.iter()).map(|(d, x)| d * sigmoid(*x)).collect());
                }
                Op::Scale(a, c) => {
                    acc(&mut grads, *a, g.iter().map(|d| d * c).collect());
                }
                Op::AddScalar(a) => self.pass(&mut grads, *a, &g),
                Op::Sum(a) => {
                    let len = self.node(*a).value.len();
                    acc(&mut grads, *a, vec![g[0]; len]);
                }
                Op::Mean(a) => {
                    let len = self.node(*a).value.len();
                    acc(&mut grads, *a, vec![g[0] / len.max(1) as f64; len]);
                }
            }
        }
        self.clear();
        Ok(out)
    }

    fn pass(&self, grads: &mut [Option<Vec<f64>>], to: Var, g: &[f64]) {
        if self.node(to).grad {
            acc(grads, to, g.to_vec());
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(e) => e.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(tape: &mut Tape, v: &[f64], grad: bool) -> Var {
        tape.leaf(&Tensor::column(v.to_vec()).unwrap(), grad)
    }

    #[test]
    fn elementwise_examples() {
        let mut t = Tape::new();
        let x = col(&mut t, &[-1.0, 2.0], false);
        let r = t.relu(x).unwrap();
        assert_eq!(t.value(r), &[0.0, 2.0]);
        let z = col(&mut t, &[0.0], false);
        let s = t.sigmoid(z).unwrap();
        assert_eq!(t.value(s), &[0.5]);
        let a = col(&mut t, &[1.0; 3], false);
        let b = col(&mut t, &[2.0; 4], false);
        let c = t.concat_rows(&[a, b]).unwrap();
        assert_eq!(t.shape(c), (7, 1));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.zeros(2, 3);
        let b = t.zeros(2, 3);
        let e = t.matmul(a, b).unwrap_err().to_string();
        assert!(e.contains("(2, 3)") && e.contains("matmul"), "{e}");
        let c = t.zeros(3, 1);
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = col(&mut t, &[1.0, -2.0, 3.0], true);
        let s = t.sum(x).unwrap();
        let g = t.backward(s, None).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);
        assert!(t.is_empty());
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = col(&mut t, &[2.0], true);
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        let g = t.backward(s, None).unwrap();
        assert_eq!(g.get(x).unwrap(), &[4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = col(&mut t, &[1.0, 2.0], true);
        assert!(t.backward(x, None).is_err());
    }

    #[test]
    fn unreachable_leaf_gets_no_gradient() {
        let mut t = Tape::new();
        let x = col(&mut t, &[1.0], true);
        let y = col(&mut t, &[1.0], true);
        let s = t.sum(x).unwrap();
        let g = t.backward(s, None).unwrap();
        assert!(g.get(y).is_none());
    }

    #[test]
    fn nothing_recorded_without_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut t = Tape::no_grad();
        let wv = t.param(&store, w);
        let x = col(&mut t, &[1.0, 1.0], false);
        let y = t.matmul(wv, x).unwrap();
        let y = t.relu(y).unwrap();
        let _ = t.sum(y).unwrap();
        assert_eq!(t.recorded_ops(), 0);

        let mut t = Tape::new();
        let wv = t.param(&store, w);
        let x = col(&mut t, &[1.0, 1.0], false);
        let y = t.matmul(wv, x).unwrap();
        let _ = t.sum(y).unwrap();
        assert_eq!(t.recorded_ops(), 2);
    }

    #[test]
    fn gradients_accumulate_into_params() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::column(vec![3.0]).unwrap());
        for _ in 0..2 {
            let mut t = Tape::new();
            let wv = t.param(&store, w);
            let s = t.sum(wv).unwrap();
            t.backward(s, Some(&mut store)).unwrap();
        }
        assert_eq!(store.tensor(w).grad().unwrap(), &[2.0]);
    }

    #[test]
    fn checked_mode_rejects_overflow() {
        let mut t = Tape::new();
        t.set_checked(true);
        let x = col(&mut t, &[1e300], false);
        assert!(t.mul(x, x).is_err());
        assert!(Tensor::column(vec![f64::NAN]).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }
}
