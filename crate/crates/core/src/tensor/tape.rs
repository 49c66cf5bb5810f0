//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a `1 x 1` variable walks the record in reverse and
//! returns the gradient of that scalar with respect to every variable that
//! was created with [`Tape::leaf`].

use std::cell::RefCell;
use std::rc::Rc;

use super::matrix::Matrix;
use crate::scalar::{lit, Scalar};

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, T),
    Transpose(usize),
    Reshape(usize),
    Relu(usize),
    Gelu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    LayerNormRows {
        x: usize,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    BatchNormCols {
        x: usize,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    MeanRows(usize),
    Mean(usize),
    Bce {
        pred: usize,
        target: Rc<Matrix<T>>,
        eps: T,
    },
    MinMaxNorm {
        x: usize,
        argmin: usize,
        argmax: usize,
        range: T,
    },
    SoftmaxXent {
        logits: usize,
        label: usize,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Rc<Matrix<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Matrix<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Matrix<T>> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn value_of(&self, id: usize) -> Rc<Matrix<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Trainable input.
    pub fn leaf(&self, value: Matrix<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Matrix<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t, T>]) -> Var<'t, T> {
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let cols = vals[0].cols();
        let rows = vals.iter().map(|v| v.rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for v in &vals {
            assert_eq!(v.cols(), cols, "concat_rows width mismatch");
            data.extend_from_slice(v.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let needs = self.needs(&ids);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(ids), needs)
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t, T>]) -> Var<'t, T> {
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows();
        let cols: usize = vals.iter().map(|v| v.cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for v in &vals {
            assert_eq!(v.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                for c in 0..v.cols() {
                    out.set(r, offset + c, v.get(r, c));
                }
            }
            offset += v.cols();
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let needs = self.needs(&ids);
        self.push(out, Op::ConcatCols(ids), needs)
    }

    /// Gradients of the scalar `loss` with respect to every variable on the tape.
    pub fn backward(&self, loss: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[loss.id].value.shape(),
            (1, 1),
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Option<Matrix<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Matrix::filled(1, 1, T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let mut send = |target: usize, contribution: Matrix<T>| {
                if !nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            };
            let val = |i: usize| -> &Matrix<T> { &nodes[i].value };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[*a].needs_grad {
                        send(*a, g.matmul(&val(*b).transpose()));
                    }
                    if nodes[*b].needs_grad {
                        send(*b, val(*a).transpose().matmul(&g));
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip_map(val(*b), |x, y| x * y));
                    send(*b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    send(*row, column_sums(&g));
                    send(*a, g);
                }
                Op::MulRow(a, row) => {
                    let r = val(*row);
                    let x = val(*a);
                    let mut gr = Matrix::zeros(1, g.cols());
                    let mut ga = g.clone();
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            let gij = g.get(i, j);
                            gr.set(0, j, gr.get(0, j) + gij * x.get(i, j));
                            ga.set(i, j, gij * r.get(0, j));
                        }
                    }
                    send(*row, gr);
                    send(*a, ga);
                }
                Op::Scale(a, c) => send(*a, g.map(|v| v * *c)),
                Op::Transpose(a) => send(*a, g.transpose()),
                Op::Reshape(a) => {
                    let (r, c) = val(*a).shape();
                    send(*a, g.reshape(r, c));
                }
                Op::Relu(a) => send(
                    *a,
                    g.zip_map(val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }),
                ),
                Op::Gelu(a) => send(*a, g.zip_map(val(*a), |gv, x| gv * gelu_grad(x))),
                Op::Sigmoid(a) => {
                    send(*a, g.zip_map(&node.value, |gv, y| gv * y * (T::one() - y)))
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut out = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot = (0..y.cols())
                            .fold(T::zero(), |acc, j| acc + g.get(i, j) * y.get(i, j));
                        for j in 0..y.cols() {
                            out.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    send(*a, out);
                }
                Op::LayerNormRows { x, xhat, inv_std } => {
                    let n: T = lit(xhat.cols() as f64);
                    let mut out = Matrix::zeros(xhat.rows(), xhat.cols());
                    for i in 0..xhat.rows() {
                        let (mut sg, mut sgx) = (T::zero(), T::zero());
                        for j in 0..xhat.cols() {
                            sg = sg + g.get(i, j);
                            sgx = sgx + g.get(i, j) * xhat.get(i, j);
                        }
                        for j in 0..xhat.cols() {
                            let v = inv_std[i] / n
                                * (n * g.get(i, j) - sg - xhat.get(i, j) * sgx);
                            out.set(i, j, v);
                        }
                    }
                    send(*x, out);
                }
                Op::BatchNormCols { x, xhat, inv_std } => {
                    let n: T = lit(xhat.rows() as f64);
                    let mut out = Matrix::zeros(xhat.rows(), xhat.cols());
                    for j in 0..xhat.cols() {
                        let (mut sg, mut sgx) = (T::zero(), T::zero());
                        for i in 0..xhat.rows() {
                            sg = sg + g.get(i, j);
                            sgx = sgx + g.get(i, j) * xhat.get(i, j);
                        }
                        for i in 0..xhat.rows() {
                            let v = inv_std[j] / n
                                * (n * g.get(i, j) - sg - xhat.get(i, j) * sgx);
                            out.set(i, j, v);
                        }
                    }
                    send(*x, out);
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = val(p).rows();
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        send(p, Matrix::from_vec(rows, cols, slice));
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = val(p).shape();
                        let mut part = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                part.set(r, c, g.get(r, offset + c));
                            }
                        }
                        send(p, part);
                        offset += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = val(*a).shape();
                    let mut out = Matrix::zeros(rows, cols);
                    out.data_mut()[start * cols..(start + g.rows()) * cols]
                        .copy_from_slice(g.data());
                    send(*a, out);
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = val(*a).shape();
                    let mut out = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..g.cols() {
                            out.set(r, start + c, g.get(r, c));
                        }
                    }
                    send(*a, out);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = val(*a).shape();
                    let inv: T = lit(1.0 / rows as f64);
                    let mut out = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            out.set(r, c, g.get(0, c) * inv);
                        }
                    }
                    send(*a, out);
                }
                Op::Mean(a) => {
                    let (rows, cols) = val(*a).shape();
                    let v = g.get(0, 0) / lit((rows * cols) as f64);
                    send(*a, Matrix::filled(rows, cols, v));
                }
                Op::Bce { pred, target, eps } => {
                    let p = val(*pred);
                    let n: T = lit(p.len() as f64);
                    let scale = g.get(0, 0) / n;
                    let lo = *eps;
                    let hi = T::one() - *eps;
                    let out = p.zip_map(target, |pv, y| {
                        if pv < lo || pv > hi {
                            T::zero()
                        } else {
                            scale * (pv - y) / (pv * (T::one() - pv))
                        }
                    });
                    send(*pred, out);
                }
                Op::MinMaxNorm {
                    x,
                    argmin,
                    argmax,
                    range,
                } => {
                    let xv = val(*x);
                    let out = if *range > T::zero() {
                        let mut out = g.map(|v| v / *range);
                        let (lo, hi) = (xv.data()[*argmin], xv.data()[*argmax]);
                        let r2 = *range * *range;
                        let mut to_min = T::zero();
                        let mut to_max = T::zero();
                        for (&gv, &xi) in g.data().iter().zip(xv.data()) {
                            to_min = to_min + gv * (xi - hi) / r2;
                            to_max = to_max - gv * (xi - lo) / r2;
                        }
                        let d = out.data_mut();
                        d[*argmin] = d[*argmin] + to_min;
                        d[*argmax] = d[*argmax] + to_max;
                        out
                    } else {
                        g
                    };
                    send(*x, out);
                }
                Op::SoftmaxXent {
                    logits,
                    label,
                    probs,
                } => {
                    let scale = g.get(0, 0);
                    let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    d[*label] = d[*label] - scale;
                    send(*logits, Matrix::row_vector(d));
                }
            }
        }
        Gradients { grads }
    }
}

fn column_sums<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.set(0, c, out.get(0, c) + m.get(r, c));
        }
    }
    out
}

const GELU_K: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let c: T = lit((2.0 / std::f64::consts::PI).sqrt());
    let half: T = lit(0.5);
    let k: T = lit(GELU_K);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c: T = lit((2.0 / std::f64::consts::PI).sqrt());
    let half: T = lit(0.5);
    let k: T = lit(GELU_K);
    let three: T = lit(3.0);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Clamped binary cross-entropy, averaged over all entries.
pub fn bce_value<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>, eps: T) -> T {
    assert_eq!(pred.shape(), target.shape(), "bce shape mismatch");
    let n: T = lit(pred.len() as f64);
    let total = pred
        .data()
        .iter()
        .zip(target.data())
        .fold(T::zero(), |acc, (&p, &y)| {
            let p = p.max(eps).min(T::one() - eps);
            acc + y * p.ln() + (T::one() - y) * (T::one() - p).ln()
        });
    -total / n
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> Rc<Matrix<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn unary(self, value: Matrix<T>, op: Op<T>) -> Var<'t, T> {
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, op, needs)
    }

    fn binary(self, other: Var<'t, T>, value: Matrix<T>, op: Op<T>) -> Var<'t, T> {
        let needs = self.tape.needs(&[self.id, other.id]);
        self.tape.push(value, op, needs)
    }

    pub fn matmul(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().matmul(&other.value());
        self.binary(other, v, Op::MatMul(self.id, other.id))
    }

    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    /// Adds a `1 x n` row to every row.
    pub fn add_row(self, row: Var<'t, T>) -> Var<'t, T> {
        let x = self.value();
        let r = row.value();
        assert_eq!((1, x.cols()), r.shape(), "add_row expects a 1x{} row", x.cols());
        let mut v = (*x).clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                v.set(i, j, x.get(i, j) + r.get(0, j));
            }
        }
        self.binary(row, v, Op::AddRow(self.id, row.id))
    }

    /// Multiplies every row elementwise by a `1 x n` row.
    pub fn mul_row(self, row: Var<'t, T>) -> Var<'t, T> {
        let x = self.value();
        let r = row.value();
        assert_eq!((1, x.cols()), r.shape(), "mul_row expects a 1x{} row", x.cols());
        let mut v = (*x).clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                v.set(i, j, x.get(i, j) * r.get(0, j));
            }
        }
        self.binary(row, v, Op::MulRow(self.id, row.id))
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn transpose(self) -> Var<'t, T> {
        let v = self.value().transpose();
        self.unary(v, Op::Transpose(self.id))
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t, T> {
        let v = (*self.value()).clone().reshape(rows, cols);
        self.unary(v, Op::Reshape(self.id))
    }

    pub fn relu(self) -> Var<'t, T> {
        let v = self.value().map(|x| x.max(T::zero()));
        self.unary(v, Op::Relu(self.id))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(self) -> Var<'t, T> {
        let v = self.value().map(gelu);
        self.unary(v, Op::Gelu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        let v = self.value().map(sigmoid);
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn softmax_rows(self) -> Var<'t, T> {
        let x = self.value();
        let mut v = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let row = x.row(i);
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let exps: Vec<T> = row.iter().map(|&e| (e - m).exp()).collect();
            let s = exps.iter().fold(T::zero(), |a, &b| a + b);
            for (j, e) in exps.into_iter().enumerate() {
                v.set(i, j, e / s);
            }
        }
        self.unary(v, Op::SoftmaxRows(self.id))
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(self, eps: T) -> Var<'t, T> {
        let x = self.value();
        let (rows, cols) = x.shape();
        let n: T = lit(cols as f64);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = x.row(i);
            let mean = row.iter().fold(T::zero(), |a, &b| a + b) / n;
            let var = row
                .iter()
                .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
                / n;
            let inv = T::one() / (var + eps).sqrt();
            for j in 0..cols {
                xhat.set(i, j, (row[j] - mean) * inv);
            }
            inv_std.push(inv);
        }
        let v = xhat.clone();
        self.unary(
            v,
            Op::LayerNormRows {
                x: self.id,
                xhat,
                inv_std,
            },
        )
    }

    /// Normalizes each column over the rows with batch statistics; returns the
    /// per-column mean and biased variance alongside.
    pub fn batch_norm_cols(self, eps: T) -> (Var<'t, T>, Vec<T>, Vec<T>) {
        let x = self.value();
        let (rows, cols) = x.shape();
        let n: T = lit(rows as f64);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(cols);
        let mut means = Vec::with_capacity(cols);
        let mut vars = Vec::with_capacity(cols);
        for j in 0..cols {
            let mean = (0..rows).fold(T::zero(), |a, i| a + x.get(i, j)) / n;
            let var = (0..rows).fold(T::zero(), |a, i| {
                let d = x.get(i, j) - mean;
                a + d * d
            }) / n;
            let inv = T::one() / (var + eps).sqrt();
            for i in 0..rows {
                xhat.set(i, j, (x.get(i, j) - mean) * inv);
            }
            inv_std.push(inv);
            means.push(mean);
            vars.push(var);
        }
        let v = xhat.clone();
        let out = self.unary(
            v,
            Op::BatchNormCols {
                x: self.id,
                xhat,
                inv_std,
            },
        );
        (out, means, vars)
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Var<'t, T> {
        let x = self.value();
        let cols = x.cols();
        let v = Matrix::from_vec(end - start, cols, x.data()[start * cols..end * cols].to_vec());
        self.unary(v, Op::SliceRows(self.id, start))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t, T> {
        let x = self.value();
        let mut v = Matrix::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            for c in start..end {
                v.set(r, c - start, x.get(r, c));
            }
        }
        self.unary(v, Op::SliceCols(self.id, start))
    }

    /// Column-wise mean over rows, giving a `1 x n` row.
    pub fn mean_rows(self) -> Var<'t, T> {
        let x = self.value();
        let mut v = column_sums(&x);
        let inv: T = lit(1.0 / x.rows() as f64);
        v = v.map(|e| e * inv);
        self.unary(v, Op::MeanRows(self.id))
    }

    pub fn mean(self) -> Var<'t, T> {
        let x = self.value();
        let v = Matrix::filled(1, 1, x.sum() / lit(x.len() as f64));
        self.unary(v, Op::Mean(self.id))
    }

    /// Binary cross-entropy of `self` (prediction) against a fixed target,
    /// with the prediction clamped to `[eps, 1 - eps]`.
    pub fn bce(self, target: Rc<Matrix<T>>, eps: T) -> Var<'t, T> {
        let v = bce_value(&self.value(), &target, eps);
        self.unary(
            Matrix::filled(1, 1, v),
            Op::Bce {
                pred: self.id,
                target,
                eps,
            },
        )
    }

    /// `(x - min) / (max - min)`; a constant input passes through unchanged.
    pub fn min_max_normalize(self) -> Var<'t, T> {
        let x = self.value();
        let mut argmin = 0;
        let mut argmax = 0;
        for (i, &v) in x.data().iter().enumerate() {
            if v < x.data()[argmin] {
                argmin = i;
            }
            if v > x.data()[argmax] {
                argmax = i;
            }
        }
        let lo = x.data()[argmin];
        let range = x.data()[argmax] - lo;
        let v = if range > T::zero() {
            x.map(|e| (e - lo) / range)
        } else {
            (*x).clone()
        };
        self.unary(
            v,
            Op::MinMaxNorm {
                x: self.id,
                argmin,
                argmax,
                range,
            },
        )
    }

    /// Softmax cross-entropy of a `1 x k` logit row against a class index.
    pub fn softmax_cross_entropy(self, label: usize) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.rows(), 1, "logits must be a single row");
        let m = x.max();
        let exps: Vec<T> = x.data().iter().map(|&e| (e - m).exp()).collect();
        let s = exps.iter().fold(T::zero(), |a, &b| a + b);
        let probs: Vec<T> = exps.iter().map(|&e| e / s).collect();
        let loss = -(probs[label].ln());
        self.unary(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxXent {
                logits: self.id,
                label,
                probs,
            },
        )
    }
}
