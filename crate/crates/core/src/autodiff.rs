//! Define-by-run reverse-mode automatic differentiation over dense 2-D
//! arrays.
//!
//! A [`Tape`] records every operation as a [`TensorNode`]. Nodes are
//! appended in creation order, so node ids are already a topological order
//! and [`Tape::backward`] is a single reverse sweep. Tapes are cheap and are
//! rebuilt for every training phase.
//!
//! ```
//! use ccgan_core::autodiff::{Tape, ReduceKind};
//! use ndarray::array;
//!
//! let mut tape = Tape::new(0);
//! let x = tape.leaf(array![[3.0]], true).unwrap();
//! let y = tape.mul(x, x).unwrap();
//! let root = tape.reduce(y, ReduceKind::Sum).unwrap();
//! tape.backward(root).unwrap();
//! assert_eq!(tape.grad(x).unwrap()[[0, 0]], 6.0);
//! ```

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Inputs to `log` are clamped to at least this value.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Neg,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    L1Norm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Leaf,
    MatMul,
    Binary(BinaryKind),
    Unary(UnaryKind),
    Scale(f64),
    Offset(f64),
    Transpose,
    RowSoftmax,
    RowLogSoftmax,
    Reduce(ReduceKind),
    StopGradient,
}

#[derive(Clone, Debug)]
pub struct TensorNode {
    pub id: Var,
    pub values: Matrix,
    pub grad: Option<Matrix>,
    pub op: Op,
    pub parents: Vec<Var>,
    pub requires_grad: bool,
}

impl TensorNode {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Ordered store of nodes for one forward/backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<TensorNode>,
    rng_seed: u64,
}

fn check_finite(what: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what}: non-finite input")))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of every row.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn log_softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Resolves the output shape of a broadcasting binary op. Either operand
/// may be a `(rows, 1)` or `(1, cols)` vector against the other.
fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

/// Sums a broadcast gradient back down to `shape`.
fn unbroadcast(g: &Matrix, shape: (usize, usize)) -> Matrix {
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

impl Tape {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &TensorNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].values[[0, 0]]
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, values: Matrix, op: Op, parents: Vec<Var>) -> Var {
        let requires_grad = match op {
            Op::Leaf | Op::StopGradient => false,
            _ => parents.iter().any(|p| self.nodes[p.0].requires_grad),
        };
        let id = Var(self.nodes.len());
        self.nodes.push(TensorNode {
            id,
            values,
            grad: None,
            op,
            parents,
            requires_grad,
        });
        id
    }

    /// Adds an input array. Parameters use `requires_grad = true`.
    pub fn leaf(&mut self, values: Matrix, requires_grad: bool) -> Result<Var> {
        check_finite("leaf", &values)?;
        let id = self.push(values, Op::Leaf, Vec::new());
        self.nodes[id.0].requires_grad = requires_grad;
        Ok(id)
    }

    /// Adds a constant input (no gradient).
    pub fn constant(&mut self, values: Matrix) -> Result<Var> {
        self.leaf(values, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::MatMul, vec![a, b]))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let Some(_) = broadcast_shape(sa, sb) else {
            return Err(Error::shape("elementwise", sa, sb));
        };
        check_finite("elementwise", self.value(a))?;
        check_finite("elementwise", self.value(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = match kind {
            BinaryKind::Add => va + vb,
            BinaryKind::Sub => va - vb,
            BinaryKind::Mul => va * vb,
        };
        Ok(self.push(out, Op::Binary(kind), vec![a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Mul)
    }

    pub fn unary(&mut self, a: Var, kind: UnaryKind) -> Result<Var> {
        let va = self.value(a);
        check_finite("unary", va)?;
        let out = match kind {
            UnaryKind::Relu => va.mapv(|x| x.max(0.0)),
            UnaryKind::Tanh => va.mapv(f64::tanh),
            UnaryKind::Sigmoid => va.mapv(sigmoid),
            UnaryKind::Exp => va.mapv(f64::exp),
            UnaryKind::Log => {
                if va.iter().any(|&x| x < 0.0) {
                    return Err(Error::Numeric("log of a negative value".into()));
                }
                va.mapv(|x| x.max(LOG_EPS).ln())
            }
            UnaryKind::Neg => va.mapv(|x| -x),
            UnaryKind::Abs => va.mapv(f64::abs),
        };
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("{kind:?} overflowed")));
        }
        Ok(self.push(out, Op::Unary(kind), vec![a]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryKind::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryKind::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryKind::Sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryKind::Log)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryKind::Neg)
    }

    /// `c * a`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(c), vec![a])
    }

    /// `a + c` for a scalar constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        self.push(out, Op::Offset(c), vec![a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose, vec![a])
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::Dimension("row_softmax of an empty array".into()));
        }
        let out = softmax_rows(va);
        Ok(self.push(out, Op::RowSoftmax, vec![a]))
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::Dimension("row_log_softmax of an empty array".into()));
        }
        let out = log_softmax_rows(va);
        Ok(self.push(out, Op::RowLogSoftmax, vec![a]))
    }

    pub fn reduce(&mut self, a: Var, kind: ReduceKind) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::Dimension("reduce of an empty array".into()));
        }
        let v = match kind {
            ReduceKind::Sum => va.sum(),
            ReduceKind::Mean => va.sum() / va.len() as f64,
            ReduceKind::L1Norm => va.iter().map(|x| x.abs()).sum(),
        };
        Ok(self.push(Array2::from_elem((1, 1), v), Op::Reduce(kind), vec![a]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, ReduceKind::Sum)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, ReduceKind::Mean)
    }

    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let out = self.value(a).clone();
        self.push(out, Op::StopGradient, vec![a])
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Populates `grad` on every node that the scalar `root` depends on
    /// through differentiable paths.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a 1x1 root, got {}x{}",
                shape.0, shape.1
            )));
        }
        self.nodes[root.0].grad = Some(Array2::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.parents.is_empty() {
                continue;
            }
            let Some(g) = node.grad.as_ref() else {
                continue;
            };
            let contributions = self.local_grads(idx, g);
            for (parent, pg) in contributions {
                let p = &mut self.nodes[parent.0];
                if !p.requires_grad {
                    continue;
                }
                match p.grad.as_mut() {
                    Some(acc) => *acc += &pg,
                    None => p.grad = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let node = &self.nodes[idx];
        let ps = &node.parents;
        let val = |v: Var| &self.nodes[v.0].values;
        match node.op {
            Op::Leaf | Op::StopGradient => Vec::new(),
            Op::MatMul => {
                let (a, b) = (ps[0], ps[1]);
                vec![(a, g.dot(&val(b).t())), (b, val(a).t().dot(g))]
            }
            Op::Binary(kind) => {
                let (a, b) = (ps[0], ps[1]);
                let (sa, sb) = (val(a).dim(), val(b).dim());
                let (ga, gb) = match kind {
                    BinaryKind::Add => (g.clone(), g.clone()),
                    BinaryKind::Sub => (g.clone(), -g),
                    BinaryKind::Mul => (g * val(b), g * val(a)),
                };
                vec![(a, unbroadcast(&ga, sa)), (b, unbroadcast(&gb, sb))]
            }
            Op::Unary(kind) => {
                let a = ps[0];
                let x = val(a);
                let y = &node.values;
                let local = match kind {
                    UnaryKind::Relu => x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    UnaryKind::Tanh => y.mapv(|t| 1.0 - t * t),
                    UnaryKind::Sigmoid => y.mapv(|s| s * (1.0 - s)),
                    UnaryKind::Exp => y.clone(),
                    UnaryKind::Log => x.mapv(|v| if v > LOG_EPS { 1.0 / v } else { 0.0 }),
                    UnaryKind::Neg => Array2::from_elem(x.dim(), -1.0),
                    UnaryKind::Abs => x.mapv(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }),
                };
                vec![(a, g * &local)]
            }
            Op::Scale(c) => vec![(ps[0], g * c)],
            Op::Offset(_) => vec![(ps[0], g.clone())],
            Op::Transpose => vec![(ps[0], g.t().to_owned())],
            Op::RowSoftmax => {
                let y = &node.values;
                let mut dx = g * y;
                for (mut row, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let s = row.sum();
                    Zip::from(&mut row).and(&yrow).for_each(|d, &yv| *d -= yv * s);
                }
                vec![(ps[0], dx)]
            }
            Op::RowLogSoftmax => {
                let y = &node.values;
                let mut dx = g.clone();
                for (mut row, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                    let s = row.sum();
                    Zip::from(&mut row)
                        .and(&yrow)
                        .for_each(|d, &lv| *d -= lv.exp() * s);
                }
                vec![(ps[0], dx)]
            }
            Op::Reduce(kind) => {
                let a = ps[0];
                let x = val(a);
                let g0 = g[[0, 0]];
                let local = match kind {
                    ReduceKind::Sum => Array2::from_elem(x.dim(), g0),
                    ReduceKind::Mean => Array2::from_elem(x.dim(), g0 / x.len() as f64),
                    ReduceKind::L1Norm => x.mapv(|v| g0 * v.signum() * (v != 0.0) as u8 as f64),
                };
                vec![(a, local)]
            }
        }
    }
}
