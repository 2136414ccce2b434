//! Wengert tape for reverse-mode differentiation.
//!
//! Nodes are appended in creation order, so parents always precede
//! children and the reverse of the node list is a valid topological order.
//! The tape is rebuilt for every forward pass; node values are never
//! mutated after creation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Smallest denominator magnitude accepted by [`Tape::div`].
pub const MIN_DENOMINATOR: f64 = 1e-30;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Div(Var, Var, Bcast),
    Neg(Var),
    Scale(Var, f64),
    Shift(Var),
    Pow(Var, f64),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Sin(Var),
    Cos(Var),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>, usize),
    Select(Vec<bool>, Var, Var),
    Broadcast(Var),
    Gather(Var, Vec<usize>),
}

/// Operation tag of a node, for inspection and error messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Shift,
    Pow,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Sin,
    Cos,
    MatMul,
    Sum,
    Mean,
    Concat,
    Select,
    Broadcast,
    Gather,
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    // true when some ancestor (or the node itself) requires a gradient
    tracked: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward pass: one optional gradient per tape node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`, zero-filled when `var` does not
    /// influence the root.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

fn binary_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(Vec<usize>, Bcast)> {
    if a.shape() == b.shape() {
        Ok((a.shape().to_vec(), Bcast::Same))
    } else if a.len() == 1 && b.len() == 1 {
        let shape = if a.shape().len() >= b.shape().len() {
            a.shape()
        } else {
            b.shape()
        };
        Ok((shape.to_vec(), Bcast::Same))
    } else if a.len() == 1 {
        Ok((b.shape().to_vec(), Bcast::LhsScalar))
    } else if b.len() == 1 {
        Ok((a.shape().to_vec(), Bcast::RhsScalar))
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn zip_with(a: &Tensor, b: &Tensor, mode: Bcast, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data: Vec<f64> = match mode {
        Bcast::Same => a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        Bcast::LhsScalar => {
            let x = a.data()[0];
            b.data().iter().map(|&y| f(x, y)).collect()
        }
        Bcast::RhsScalar => {
            let y = b.data()[0];
            a.data().iter().map(|&x| f(x, y)).collect()
        }
    };
    Tensor::new(shape, data).expect("broadcast shape")
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        match self.nodes[v.0].op {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Neg(..) => OpKind::Neg,
            Op::Scale(..) => OpKind::Scale,
            Op::Shift(..) => OpKind::Shift,
            Op::Pow(..) => OpKind::Pow,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Sin(..) => OpKind::Sin,
            Op::Cos(..) => OpKind::Cos,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::Concat(..) => OpKind::Concat,
            Op::Select(..) => OpKind::Select,
            Op::Broadcast(..) => OpKind::Broadcast,
            Op::Gather(..) => OpKind::Gather,
        }
    }

    /// Parents of a node in operand order.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) | Op::Div(a, b, _) => vec![*a, *b],
            Op::MatMul(a, b) | Op::Select(_, a, b) => vec![*a, *b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Pow(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Broadcast(a)
            | Op::Gather(a, _) => vec![*a],
            Op::Concat(parts, _) => parts.clone(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let tracked = match &op {
            Op::Leaf => false,
            _ => self.parents_tracked(&op),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad: false,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn parents_tracked(&self, op: &Op) -> bool {
        let t = |v: &Var| self.nodes[v.0].tracked;
        match op {
            Op::Leaf => false,
            Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) | Op::Div(a, b, _) => t(a) || t(b),
            Op::MatMul(a, b) | Op::Select(_, a, b) => t(a) || t(b),
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Pow(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Broadcast(a)
            | Op::Gather(a, _) => t(a),
            Op::Concat(parts, _) => parts.iter().any(t),
        }
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Bcast)> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, mode) = binary_shape(name, ta, tb)?;
        Ok((zip_with(ta, tb, mode, shape, f), mode))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, m) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b, m)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, m) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b, m)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, m) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b, m)))
    }

    /// Elementwise division. Fails when any denominator is smaller than
    /// [`MIN_DENOMINATOR`] in magnitude.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if let Some((index, &value)) = self
            .value(b)
            .data()
            .iter()
            .enumerate()
            .find(|(_, d)| !(libm::fabs(**d) >= MIN_DENOMINATOR))
        {
            return Err(Error::NearZeroDenominator { index, value });
        }
        let (v, m) = self.binary("div", a, b, |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b, m)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a))
    }

    /// `c * a` for a fixed constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    /// `a + c` for a fixed constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Shift(a))
    }

    /// `a^p` for a fixed real exponent.
    pub fn pow(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).map(|x| libm::pow(x, p));
        self.push(v, Op::Pow(a, p))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::exp);
        self.push(v, Op::Exp(a))
    }

    /// Natural logarithm; the argument must be positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&value) = self.value(a).data().iter().find(|x| !(**x >= MIN_DENOMINATOR)) {
            return Err(Error::Domain { what: "log", value });
        }
        let v = self.value(a).map(libm::log);
        Ok(self.push(v, Op::Log(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::cos);
        self.push(v, Op::Cos(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same shape")
    }

    /// Product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        };
        let (n, k) = ta.dims2().ok_or_else(mismatch)?;
        let (k2, m) = tb.dims2().ok_or_else(mismatch)?;
        if k != k2 {
            return Err(mismatch());
        }
        let out = matmul_raw(ta.data(), tb.data(), n, k, m);
        let v = Tensor::new(vec![n, m], out)?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Concatenate rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(invalid("concat needs at least one part and axis 0 or 1"));
        }
        let first = self.value(parts[0]);
        let (r0, c0) = first.dims2().ok_or_else(|| invalid("concat expects rank-2 tensors"))?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2().ok_or_else(|| invalid("concat expects rank-2 tensors"))?;
            let ok = if axis == 0 { c == c0 } else { r == r0 };
            if !ok {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += r;
            cols += c;
        }
        let v = if axis == 0 {
            let mut data = Vec::with_capacity(rows * c0);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Tensor::new(vec![rows, c0], data)?
        } else {
            let mut data = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &p in parts {
                    let t = self.value(p);
                    let c = t.shape()[1];
                    data.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
                }
            }
            Tensor::new(vec![r0, cols], data)?
        };
        Ok(self.push(v, Op::Concat(parts.to_vec(), axis)))
    }

    /// Elementwise `mask ? a : b`.
    pub fn select(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || mask.len() != ta.len() {
            return Err(Error::ShapeMismatch {
                op: "select",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = mask
            .iter()
            .zip(ta.data().iter().zip(tb.data()))
            .map(|(&m, (&x, &y))| if m { x } else { y })
            .collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(v, Op::Select(mask.to_vec(), a, b)))
    }

    /// Expand a scalar, a row `[1, m]`/`[m]` or a column `[n, 1]` to the
    /// rank-2 `shape`.
    pub fn broadcast(&mut self, a: Var, shape: [usize; 2]) -> Result<Var> {
        let [n, m] = shape;
        let index = broadcast_index(self.value(a).shape(), shape)?;
        let src = self.value(a).data();
        let data = (0..n * m).map(|i| src[index(i)]).collect();
        let v = Tensor::new(vec![n, m], data)?;
        Ok(self.push(v, Op::Broadcast(a)))
    }

    /// `out[i] = a[indices[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, a: Var, indices: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(a).data();
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(invalid(alloc::format!("gather index {bad} out of range {}", src.len())));
        }
        let data = indices.iter().map(|&i| src[i]).collect();
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Gather(a, indices)))
    }

    /// Reshape without copying semantics (a gather with identity indices).
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let n = self.value(a).len();
        self.gather(a, (0..n).collect(), shape)
    }

    /// Column `j` of a rank-2 tensor as `[n, 1]`.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let (n, m) = self
            .value(a)
            .dims2()
            .ok_or_else(|| invalid("column expects a rank-2 tensor"))?;
        if j >= m {
            return Err(invalid("column index out of range"));
        }
        self.gather(a, (0..n).map(|i| i * m + j).collect(), vec![n, 1])
    }

    /// Reverse accumulation from a one-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::ones(root_value.shape()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.tracked {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, m) => {
                self.acc_binary(grads, *a, *b, *m, gd, |_, _, g| (g, g));
            }
            Op::Sub(a, b, m) => {
                self.acc_binary(grads, *a, *b, *m, gd, |_, _, g| (g, -g));
            }
            Op::Mul(a, b, m) => {
                self.acc_binary(grads, *a, *b, *m, gd, |x, y, g| (g * y, g * x));
            }
            Op::Div(a, b, m) => {
                self.acc_binary(grads, *a, *b, *m, gd, |x, y, g| (g / y, -g * x / (y * y)));
            }
            Op::Neg(a) => self.acc_map(grads, *a, gd, |_, _, g| -g),
            Op::Scale(a, c) => {
                let c = *c;
                self.acc_map(grads, *a, gd, |_, _, g| c * g)
            }
            Op::Shift(a) => self.acc_map(grads, *a, gd, |_, _, g| g),
            Op::Pow(a, p) => {
                let p = *p;
                self.acc_map(grads, *a, gd, |x, _, g| {
                    if p == 0.0 {
                        0.0
                    } else if p == 1.0 {
                        g
                    } else {
                        g * p * libm::pow(x, p - 1.0)
                    }
                })
            }
            Op::Exp(a) => self.acc_map_out(grads, *a, out, gd, |_, y, g| g * y),
            Op::Log(a) => self.acc_map(grads, *a, gd, |x, _, g| g / x),
            Op::Tanh(a) => self.acc_map_out(grads, *a, out, gd, |_, y, g| g * (1.0 - y * y)),
            Op::Sigmoid(a) => self.acc_map_out(grads, *a, out, gd, |_, y, g| g * y * (1.0 - y)),
            Op::Sin(a) => self.acc_map(grads, *a, gd, |x, _, g| g * libm::cos(x)),
            Op::Cos(a) => self.acc_map(grads, *a, gd, |x, _, g| -g * libm::sin(x)),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k) = ta.dims2().expect("rank 2");
                let m = tb.shape()[1];
                if self.nodes[a.0].tracked {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for r in 0..n {
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += gd[r * m + j] * tb.data()[c * m + j];
                            }
                            da[r * k + c] = s;
                        }
                    }
                    accumulate(grads, *a, ta.shape(), &da);
                }
                if self.nodes[b.0].tracked {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * m];
                    for r in 0..n {
                        for c in 0..k {
                            let av = ta.data()[r * k + c];
                            if av == 0.0 {
                                continue;
                            }
                            let row = &gd[r * m..(r + 1) * m];
                            let dst = &mut db[c * m..(c + 1) * m];
                            for (d, &gv) in dst.iter_mut().zip(row) {
                                *d += av * gv;
                            }
                        }
                    }
                    accumulate(grads, *b, tb.shape(), &db);
                }
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                accumulate(grads, *a, t.shape(), &vec![gd[0]; t.len()]);
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let v = gd[0] / t.len() as f64;
                accumulate(grads, *a, t.shape(), &vec![v; t.len()]);
            }
            Op::Concat(parts, axis) => {
                let cols_total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let (r, c) = t.dims2().expect("rank 2");
                    if self.nodes[p.0].tracked {
                        let mut d = vec![0.0; r * c];
                        if *axis == 0 {
                            d.copy_from_slice(&gd[offset * cols_total..(offset + r) * cols_total]);
                        } else {
                            for row in 0..r {
                                d[row * c..(row + 1) * c]
                                    .copy_from_slice(&gd[row * cols_total + offset..row * cols_total + offset + c]);
                            }
                        }
                        accumulate(grads, p, t.shape(), &d);
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Select(mask, a, b) => {
                let shape = out.shape();
                if self.nodes[a.0].tracked {
                    let d: Vec<f64> = mask.iter().zip(gd).map(|(&m, &g)| if m { g } else { 0.0 }).collect();
                    accumulate(grads, *a, shape, &d);
                }
                if self.nodes[b.0].tracked {
                    let d: Vec<f64> = mask.iter().zip(gd).map(|(&m, &g)| if m { 0.0 } else { g }).collect();
                    accumulate(grads, *b, shape, &d);
                }
            }
            Op::Broadcast(a) => {
                let t = self.value(*a);
                let (n, m) = out.dims2().expect("rank 2");
                let index = broadcast_index(t.shape(), [n, m]).expect("validated at forward");
                let mut d = vec![0.0; t.len()];
                for (k, &gv) in gd.iter().enumerate() {
                    d[index(k)] += gv;
                }
                accumulate(grads, *a, t.shape(), &d);
            }
            Op::Gather(a, indices) => {
                let t = self.value(*a);
                let mut d = vec![0.0; t.len()];
                for (&src, &gv) in indices.iter().zip(gd) {
                    d[src] += gv;
                }
                accumulate(grads, *a, t.shape(), &d);
            }
        }
    }

    fn acc_map(&self, grads: &mut [Option<Tensor>], a: Var, gd: &[f64], f: impl Fn(f64, f64, f64) -> f64) {
        if !self.nodes[a.0].tracked {
            return;
        }
        let t = self.value(a);
        let d: Vec<f64> = t.data().iter().zip(gd).map(|(&x, &g)| f(x, 0.0, g)).collect();
        accumulate(grads, a, t.shape(), &d);
    }

    fn acc_map_out(
        &self,
        grads: &mut [Option<Tensor>],
        a: Var,
        out: &Tensor,
        gd: &[f64],
        f: impl Fn(f64, f64, f64) -> f64,
    ) {
        if !self.nodes[a.0].tracked {
            return;
        }
        let t = self.value(a);
        let d: Vec<f64> = t
            .data()
            .iter()
            .zip(out.data())
            .zip(gd)
            .map(|((&x, &y), &g)| f(x, y, g))
            .collect();
        accumulate(grads, a, t.shape(), &d);
    }

    fn acc_binary(
        &self,
        grads: &mut [Option<Tensor>],
        a: Var,
        b: Var,
        mode: Bcast,
        gd: &[f64],
        f: impl Fn(f64, f64, f64) -> (f64, f64),
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        let n = gd.len();
        let xa = |i: usize| {
            if mode == Bcast::LhsScalar {
                ta.data()[0]
            } else {
                ta.data()[i]
            }
        };
        let xb = |i: usize| {
            if mode == Bcast::RhsScalar {
                tb.data()[0]
            } else {
                tb.data()[i]
            }
        };
        let mut da = vec![0.0; ta.len()];
        let mut db = vec![0.0; tb.len()];
        for i in 0..n {
            let (ga, gb) = f(xa(i), xb(i), gd[i]);
            match mode {
                Bcast::Same => {
                    da[i] = ga;
                    db[i] = gb;
                }
                Bcast::LhsScalar => {
                    da[0] += ga;
                    db[i] = gb;
                }
                Bcast::RhsScalar => {
                    da[i] = ga;
                    db[0] += gb;
                }
            }
        }
        if self.nodes[a.0].tracked {
            accumulate(grads, a, ta.shape(), &da);
        }
        if self.nodes[b.0].tracked {
            accumulate(grads, b, tb.shape(), &db);
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], d: &[f64]) {
    match &mut grads[v.0] {
        Some(g) => {
            for (x, &y) in g.data_mut().iter_mut().zip(d) {
                *x += y;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), d.to_vec()).expect("gradient shape"));
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for c in 0..k {
            let av = a[i * k + c];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[c * m..(c + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn broadcast_index(src: &[usize], [n, m]: [usize; 2]) -> Result<impl Fn(usize) -> usize> {
    let len: usize = src.iter().product();
    // 0 = scalar, 1 = row, 2 = column, 3 = same
    let kind = if len == 1 {
        0
    } else if src == [1, m] || src == [m] {
        1
    } else if src == [n, 1] && m != 1 {
        2
    } else if src == [n, m] {
        3
    } else {
        return Err(Error::ShapeMismatch {
            op: "broadcast",
            lhs: src.to_vec(),
            rhs: vec![n, m],
        });
    };
    Ok(move |i: usize| match kind {
        0 => 0,
        1 => i % m,
        2 => i / m,
        _ => i,
    })
}
