//! Dense row-major matrices and a reverse-mode gradient tape.
//!
//! Every tensor is two-dimensional (`[rows, cols]`); a batch of scalar samples
//! is a `[n, 1]` column and a scalar is `[1, 1]`. Operations are recorded on a
//! [`Tape`] as they are evaluated. [`Tape::backward`] then walks the tape in
//! reverse and accumulates adjoints into every node that depends on a
//! trainable leaf. Subgraphs built only from constants are skipped.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Identifier of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    node: Option<Var>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new",
                expected: vec![rows, cols],
                found: vec![data.len()],
            });
        }
        Ok(Self {
            shape: [rows, cols],
            data,
            grad: None,
            node: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: [rows, cols],
            data: vec![value; rows * cols],
            grad: None,
            node: None,
        }
    }

    /// A `[n, 1]` column holding `data`.
    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Self {
            shape: [n, 1],
            data,
            grad: None,
            node: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::column(vec![value])
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn node(&self) -> Option<Var> {
        self.node
    }

    /// The single value of a `[1, 1]` tensor, or the first element otherwise.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// Copy of column `j`.
    pub fn col(&self, j: usize) -> Vec<f64> {
        let c = self.shape[1];
        (0..self.shape[0]).map(|r| self.data[r * c + j]).collect()
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn hstack(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |t| t.rows());
        let mut cols = 0;
        for p in parts {
            if p.rows() != rows {
                return Err(Error::ShapeMismatch {
                    context: "hstack",
                    expected: vec![rows],
                    found: vec![p.rows()],
                });
            }
            cols += p.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Tensor::new(rows, cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
            node: None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    fn ensure_same(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context,
                expected: self.shape.to_vec(),
                found: other.shape.to_vec(),
            })
        }
    }
}

/// Pointwise nonlinearities available to networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softplus" => Activation::Softplus,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => math::tanh(x),
            Activation::Sigmoid => math::sigmoid(x),
            Activation::Softplus => math::softplus(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => -math::expm1(-y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Act(Var, Activation),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    LogMeanExpRows(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Adds a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    /// Adds a leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    fn push_leaf(&mut self, mut t: Tensor, needs_grad: bool) -> Var {
        t.grad = None;
        self.push(t, Op::Leaf, needs_grad)
    }

    fn push(&mut self, mut value: Tensor, op: Op, needs_grad: bool) -> Var {
        let id = Var(self.nodes.len());
        value.node = Some(id);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, ctx: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.ensure_same(tb, ctx)?;
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                expected: vec![ta.cols()],
                found: vec![tb.rows()],
            });
        }
        let out = matmul_raw(ta, tb);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Adds the `[1, m]` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(Error::ShapeMismatch {
                context: "add_row",
                expected: vec![1, ta.cols()],
                found: tb.shape.to_vec(),
            });
        }
        let m = ta.cols();
        let data = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data[i % m])
            .collect();
        let out = Tensor::new(ta.rows(), m, data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::AddRow(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "mul_scalar",
                expected: vec![1, 1],
                found: ts.shape.to_vec(),
            });
        }
        let k = ts.data[0];
        let out = self.value(a).map(|x| x * k);
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(out, Op::MulScalar(a, s), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Scale(a, k), |x| x * k)
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        self.unary(a, Op::Act(a, act), |x| act.apply(x))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), math::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), math::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), math::sqrt)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Op::Recip(a), |x| 1.0 / x)
    }

    /// Elementwise clamp; the gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean();
        let ng = self.ng(a);
        self.push(Tensor::scalar(m), Op::Mean(a), ng)
    }

    /// Row-wise `ln(mean_j exp(a_ij))`, giving a `[rows, 1]` column.
    pub fn log_mean_exp_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = (0..ta.rows()).map(|r| log_mean_exp(ta.row(r))).collect();
        let ng = self.ng(a);
        self.push(Tensor::column(out), Op::LogMeanExpRows(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::hstack(&ts)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Row `k` of the result is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= ta.rows() {
                return Err(Error::invalid("idx", "row index out of bounds"));
            }
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::new(idx.len(), c, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = transpose_raw(self.value(a));
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Same data viewed as `[rows, cols]`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(rows, cols, ta.data.clone())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Reverse sweep from a scalar `loss`. Gradients are stored on every node
    /// that depends on a trainable leaf and can be read with [`grad`](Self::grad).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape.to_vec()));
        }
        for n in &mut self.nodes {
            n.value.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            let out = &nodes[i].value;
            let val = |v: Var| &nodes[v.0].value;
            let want = |v: Var| nodes[v.0].needs_grad;
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                if !nodes[v.0].needs_grad {
                    return;
                }
                let len = nodes[v.0].value.len();
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                f(slot);
            };
            match &nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let gt = Tensor {
                        shape: out.shape,
                        data: g.clone(),
                        grad: None,
                        node: None,
                    };
                    if want(*a) {
                        let ga = matmul_bt(&gt, tb);
                        acc(*a, &mut |s| add_into(s, &ga.data));
                    }
                    if want(*b) {
                        let gb = matmul_at(ta, &gt);
                        acc(*b, &mut |s| add_into(s, &gb.data));
                    }
                }
                Op::AddRow(a, b) => {
                    acc(*a, &mut |s| add_into(s, &g));
                    let m = out.cols();
                    acc(*b, &mut |s| {
                        for (k, gv) in g.iter().enumerate() {
                            s[k % m] += gv;
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |s| add_into(s, &g));
                    acc(*b, &mut |s| add_into(s, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |s| add_into(s, &g));
                    acc(*b, &mut |s| {
                        for (x, gv) in s.iter_mut().zip(&g) {
                            *x -= gv;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    acc(*a, &mut |s| {
                        for k in 0..s.len() {
                            s[k] += g[k] * tb.data[k];
                        }
                    });
                    acc(*b, &mut |s| {
                        for k in 0..s.len() {
                            s[k] += g[k] * ta.data[k];
                        }
                    });
                }
                Op::MulScalar(a, sv) => {
                    let (ta, k) = (val(*a), val(*sv).data[0]);
                    acc(*a, &mut |s| {
                        for (x, gv) in s.iter_mut().zip(&g) {
                            *x += gv * k;
                        }
                    });
                    acc(*sv, &mut |s| {
                        s[0] += g.iter().zip(&ta.data).map(|(gv, x)| gv * x).sum::<f64>();
                    });
                }
                Op::Scale(a, k) => acc(*a, &mut |s| {
                    for (x, gv) in s.iter_mut().zip(&g) {
                        *x += gv * k;
                    }
                }),
                Op::Offset(a) => acc(*a, &mut |s| add_into(s, &g)),
                Op::Act(a, act) => acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * act.derivative_from_output(out.data[k]);
                    }
                }),
                Op::Exp(a) => acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * out.data[k];
                    }
                }),
                Op::Ln(a) => {
                    let ta = val(*a);
                    acc(*a, &mut |s| {
                        for k in 0..s.len() {
                            s[k] += g[k] / ta.data[k];
                        }
                    })
                }
                Op::Square(a) => {
                    let ta = val(*a);
                    acc(*a, &mut |s| {
                        for k in 0..s.len() {
                            s[k] += 2.0 * g[k] * ta.data[k];
                        }
                    })
                }
                Op::Sqrt(a) => acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += 0.5 * g[k] / out.data[k];
                    }
                }),
                Op::Recip(a) => acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] -= g[k] * out.data[k] * out.data[k];
                    }
                }),
                Op::Clamp(a, lo, hi) => {
                    let ta = val(*a);
                    acc(*a, &mut |s| {
                        for k in 0..s.len() {
                            let x = ta.data[k];
                            if x >= *lo && x <= *hi {
                                s[k] += g[k];
                            }
                        }
                    })
                }
                Op::Sum(a) => acc(*a, &mut |s| {
                    for x in s.iter_mut() {
                        *x += g[0];
                    }
                }),
                Op::Mean(a) => acc(*a, &mut |s| {
                    let w = g[0] / s.len() as f64;
                    for x in s.iter_mut() {
                        *x += w;
                    }
                }),
                Op::LogMeanExpRows(a) => {
                    let ta = val(*a);
                    let c = ta.cols();
                    acc(*a, &mut |s| {
                        for r in 0..ta.rows() {
                            let w = g[r] / c as f64;
                            for j in 0..c {
                                s[r * c + j] += w * math::exp(ta.data[r * c + j] - out.data[r]);
                            }
                        }
                    })
                }
                Op::ConcatCols(parts) => {
                    let total = out.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pc = val(*p).cols();
                        acc(*p, &mut |s| {
                            for r in 0..out.rows() {
                                for j in 0..pc {
                                    s[r * pc + j] += g[r * total + offset + j];
                                }
                            }
                        });
                        offset += pc;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let c = out.cols();
                    acc(*a, &mut |s| {
                        for (k, &i) in idx.iter().enumerate() {
                            for j in 0..c {
                                s[i * c + j] += g[k * c + j];
                            }
                        }
                    })
                }
                Op::Transpose(a) => {
                    let gt = transpose_raw(&Tensor {
                        shape: out.shape,
                        data: g.clone(),
                        grad: None,
                        node: None,
                    });
                    acc(*a, &mut |s| add_into(s, &gt.data));
                }
                Op::Reshape(a) => acc(*a, &mut |s| add_into(s, &g)),
            }
            self.nodes[i].value.grad = Some(g);
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `ln(mean(exp(xs)))` with the maximum factored out.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| math::exp(x - m)).sum();
    m + math::ln(s / xs.len() as f64)
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        shape: [n, m],
        data: out,
        grad: None,
        node: None,
    }
}

/// `g · bᵀ` for `g: [n, m]`, `b: [k, m]`.
fn matmul_bt(g: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, k) = (g.rows(), g.cols(), b.rows());
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let grow = &g.data[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b.data[p * m..(p + 1) * m];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor {
        shape: [n, k],
        data: out,
        grad: None,
        node: None,
    }
}

/// `aᵀ · g` for `a: [n, k]`, `g: [n, m]`.
fn matmul_at(a: &Tensor, g: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), g.cols());
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let grow = &g.data[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor {
        shape: [k, m],
        data: out,
        grad: None,
        node: None,
    }
}

fn transpose_raw(a: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), a.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.data[i * m + j];
        }
    }
    Tensor {
        shape: [m, n],
        data: out,
        grad: None,
        node: None,
    }
}
