use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Zero-padding rule of the strided convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// No padding: `out = floor((len - width) / stride) + 1`.
    Valid,
    /// Zero-pad so that `out = ceil(len / stride)`; the extra sample, if
    /// any, goes to the right.
    Same,
}

impl Padding {
    /// Output length and left padding for the given geometry.
    pub fn output_len(self, len: usize, width: usize, stride: usize) -> Option<(usize, usize)> {
        if stride == 0 || width == 0 || len == 0 {
            return None;
        }
        match self {
            Padding::Valid => (len >= width).then(|| ((len - width) / stride + 1, 0)),
            Padding::Same => {
                let out = len.div_ceil(stride);
                let total = ((out - 1) * stride + width).saturating_sub(len);
                Some((out, total / 2))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Conv1d { input: Var, weight: Var, bias: Var, geom: ConvGeom },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { input: Var, start: usize },
    SliceRows { input: Var, start: usize },
    Tanh(Var),
    Sigmoid(Var),
    Prelu(Var, Var),
    Softmax(Var),
    Mean(Var),
    Sum(Var),
    Reshape(Var),
    LayerNorm { input: Var, groups: usize, inv_std: Vec<f64> },
    Nll { probs: Var, labels: Vec<usize>, eps: f64 },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::MulCol(a, b)
            | Op::Prelu(a, b) => vec![*a, *b],
            Op::Conv1d { input, weight, bias, .. } => vec![*input, *weight, *bias],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
            Op::Transpose(a)
            | Op::Affine(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::SliceCols { input: a, .. }
            | Op::SliceRows { input: a, .. }
            | Op::LayerNorm { input: a, .. }
            | Op::Nll { probs: a, .. } => vec![*a],
        }
    }
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Operation selector for [`Tape::apply`], mirroring the typed methods.
/// Used where ops have to be enumerated generically, e.g. gradient checks.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Transpose,
    Conv1d { stride: usize, padding: Padding },
    Add,
    Sub,
    Mul,
    AddRow,
    MulRow,
    MulCol,
    Affine { scale: f64, shift: f64 },
    ConcatCols,
    ConcatRows,
    SliceCols { start: usize, len: usize },
    SliceRows { start: usize, len: usize },
    Tanh,
    Sigmoid,
    Prelu,
    Softmax,
    Mean,
    Sum,
    Flatten,
    LayerNorm { groups: usize, eps: f64 },
    Nll { labels: Vec<usize>, eps: f64 },
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so every operation's inputs precede
/// it and a single reverse sweep visits the graph in topological order.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected a matrix, got {s:?}"))),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. Non-finite values are rejected.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.push_node(value, Op::Leaf, requires_grad))
    }

    /// A trainable input.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_node(value, op, requires_grad))
    }

    /// Generic dispatch onto the typed operation methods.
    pub fn apply(&mut self, kind: &OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{kind:?} takes {n} inputs, got {}",
                    inputs.len()
                )))
            }
        };
        match kind {
            OpKind::MatMul => arity(2).and_then(|_| self.matmul(inputs[0], inputs[1])),
            OpKind::Transpose => arity(1).and_then(|_| self.transpose(inputs[0])),
            OpKind::Conv1d { stride, padding } => arity(3)
                .and_then(|_| self.conv1d(inputs[0], inputs[1], inputs[2], *stride, *padding)),
            OpKind::Add => arity(2).and_then(|_| self.add(inputs[0], inputs[1])),
            OpKind::Sub => arity(2).and_then(|_| self.sub(inputs[0], inputs[1])),
            OpKind::Mul => arity(2).and_then(|_| self.mul(inputs[0], inputs[1])),
            OpKind::AddRow => arity(2).and_then(|_| self.add_row(inputs[0], inputs[1])),
            OpKind::MulRow => arity(2).and_then(|_| self.mul_row(inputs[0], inputs[1])),
            OpKind::MulCol => arity(2).and_then(|_| self.mul_col(inputs[0], inputs[1])),
            OpKind::Affine { scale, shift } => {
                arity(1).and_then(|_| self.affine(inputs[0], *scale, *shift))
            }
            OpKind::ConcatCols => self.concat_cols(inputs),
            OpKind::ConcatRows => self.concat_rows(inputs),
            OpKind::SliceCols { start, len } => {
                arity(1).and_then(|_| self.slice_cols(inputs[0], *start, *len))
            }
            OpKind::SliceRows { start, len } => {
                arity(1).and_then(|_| self.slice_rows(inputs[0], *start, *len))
            }
            OpKind::Tanh => arity(1).and_then(|_| self.tanh(inputs[0])),
            OpKind::Sigmoid => arity(1).and_then(|_| self.sigmoid(inputs[0])),
            OpKind::Prelu => arity(2).and_then(|_| self.prelu(inputs[0], inputs[1])),
            OpKind::Softmax => arity(1).and_then(|_| self.softmax(inputs[0])),
            OpKind::Mean => arity(1).and_then(|_| self.mean(inputs[0])),
            OpKind::Sum => arity(1).and_then(|_| self.sum(inputs[0])),
            OpKind::Flatten => arity(1).and_then(|_| self.flatten(inputs[0])),
            OpKind::LayerNorm { groups, eps } => {
                arity(1).and_then(|_| self.layer_norm(inputs[0], *groups, *eps))
            }
            OpKind::Nll { labels, eps } => arity(1).and_then(|_| self.nll(inputs[0], labels, *eps)),
        }
    }

    /// `a[m,k] · b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul", ta)?;
        let (k2, n) = dims2("matmul", tb)?;
        if k != k2 {
            return Err(shape_err("matmul", format!("inner dimensions {k} and {k2} differ")));
        }
        let out = kernels::matmul_nn(ta.data(), tb.data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = dims2("transpose", ta)?;
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        self.push("transpose", Tensor::from_parts(vec![n, m], out), Op::Transpose(a))
    }

    /// Strided convolution of `input[batch, len, in_ch]` with
    /// `weight[width, in_ch, out_ch]` plus `bias[out_ch]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (tx, tw, tb) = (self.value(input), self.value(weight), self.value(bias));
        let &[batch, len, in_ch] = tx.shape() else {
            return Err(shape_err("conv1d", format!("input must be [batch, len, ch], got {:?}", tx.shape())));
        };
        let &[width, w_in, out_ch] = tw.shape() else {
            return Err(shape_err("conv1d", format!("weight must be [width, in, out], got {:?}", tw.shape())));
        };
        if w_in != in_ch {
            return Err(shape_err("conv1d", format!("input has {in_ch} channels, filters expect {w_in}")));
        }
        if tb.shape() != [out_ch] {
            return Err(shape_err("conv1d", format!("bias {:?} does not match {out_ch} filters", tb.shape())));
        }
        let Some((out_len, pad_left)) = padding.output_len(len, width, stride) else {
            return Err(shape_err(
                "conv1d",
                format!("length {len} incompatible with width {width}, stride {stride} under {padding:?}"),
            ));
        };
        let geom = ConvGeom { batch, len, in_ch, out_ch, width, stride, pad_left, out_len };
        let out = kernels::conv1d_forward(tx.data(), tw.data(), tb.data(), &geom);
        self.push(
            "conv1d",
            Tensor::from_parts(vec![batch, out_len, out_ch], out),
            Op::Conv1d { input, weight, bias, geom },
        )
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(name, Tensor::from_parts(shape, out), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&self, name: &'static str, a: Var, row: Var) -> Result<usize> {
        let n = self.value(a).last_dim();
        let tr = self.value(row);
        if tr.len() != n || tr.shape().iter().rev().skip(1).any(|&d| d != 1) {
            return Err(shape_err(name, format!("row {:?} does not broadcast over {:?}", tr.shape(), self.value(a).shape())));
        }
        Ok(n)
    }

    /// Adds `row[n]` to every row along the last axis of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = self.row_broadcast("add_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let out = ta.data().chunks(n).flat_map(|r| r.iter().zip(tr.data()).map(|(x, y)| x + y)).collect();
        let shape = ta.shape().to_vec();
        self.push("add_row", Tensor::from_parts(shape, out), Op::AddRow(a, row))
    }

    /// Scales every row along the last axis of `a` elementwise by `row[n]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = self.row_broadcast("mul_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let out = ta.data().chunks(n).flat_map(|r| r.iter().zip(tr.data()).map(|(x, y)| x * y)).collect();
        let shape = ta.shape().to_vec();
        self.push("mul_row", Tensor::from_parts(shape, out), Op::MulRow(a, row))
    }

    /// Scales row `i` of `a[m,n]` by `col[i,0]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        let (m, n) = dims2("mul_col", ta)?;
        if tc.shape() != [m, 1] {
            return Err(shape_err("mul_col", format!("column {:?} does not match {m} rows", tc.shape())));
        }
        let out = ta
            .data()
            .chunks(n)
            .zip(tc.data())
            .flat_map(|(r, &s)| r.iter().map(move |x| x * s))
            .collect();
        self.push("mul_col", Tensor::from_parts(vec![m, n], out), Op::MulCol(a, col))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| scale * x + shift).collect();
        let shape = ta.shape().to_vec();
        self.push("affine", Tensor::from_parts(shape, out), Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_cols inputs"));
        }
        let m = dims2("concat_cols", self.value(parts[0]))?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2("concat_cols", self.value(p))?;
            if r != m {
                return Err(shape_err("concat_cols", format!("row counts {m} and {r} differ")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push("concat_cols", Tensor::from_parts(vec![m, total], out), Op::ConcatCols(parts.to_vec()))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_rows inputs"));
        }
        let n = dims2("concat_rows", self.value(parts[0]))?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = dims2("concat_rows", self.value(p))?;
            if c != n {
                return Err(shape_err("concat_rows", format!("column counts {n} and {c} differ")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        self.push("concat_rows", Tensor::from_parts(vec![rows, n], out), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = dims2("slice_cols", ta)?;
        if len == 0 || start + len > n {
            return Err(shape_err("slice_cols", format!("columns {start}..{} out of 0..{n}", start + len)));
        }
        let out = ta.data().chunks(n).flat_map(|r| r[start..start + len].iter().copied()).collect();
        self.push("slice_cols", Tensor::from_parts(vec![m, len], out), Op::SliceCols { input: a, start })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = dims2("slice_rows", ta)?;
        if len == 0 || start + len > m {
            return Err(shape_err("slice_rows", format!("rows {start}..{} out of 0..{m}", start + len)));
        }
        let out = ta.data()[start * n..(start + len) * n].to_vec();
        self.push("slice_rows", Tensor::from_parts(vec![len, n], out), Op::SliceRows { input: a, start })
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        self.push(name, Tensor::from_parts(shape, out), op)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, libm::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    /// Parametric rectifier with one slope per channel of the last axis.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        let n = self.row_broadcast("prelu", a, slope)?;
        let (ta, ts) = (self.value(a), self.value(slope));
        let out = ta
            .data()
            .chunks(n)
            .flat_map(|r| r.iter().zip(ts.data()).map(|(&x, &s)| if x > 0.0 { x } else { s * x }))
            .collect();
        let shape = ta.shape().to_vec();
        self.push("prelu", Tensor::from_parts(shape, out), Op::Prelu(a, slope))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = ta.last_dim();
        let mut out = Vec::with_capacity(ta.len());
        for row in ta.data().chunks(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut total = 0.0;
            for &x in row {
                let e = libm::exp(x - max);
                total += e;
                out.push(e);
            }
            for v in &mut out[start..] {
                *v /= total;
            }
        }
        let shape = ta.shape().to_vec();
        self.push("softmax", Tensor::from_parts(shape, out), Op::Softmax(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let m = ta.data().iter().sum::<f64>() / ta.len() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// Collapses every axis after the first: `[n, ...] -> [n, prod(...)]`.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = ta.shape()[0];
        let rest = ta.len() / n;
        self.reshape(a, &[n, rest])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshaped(shape)?;
        self.push("reshape", t, Op::Reshape(a))
    }

    /// Normalizes each of `groups` equal contiguous segments of the last
    /// axis to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var, groups: usize, eps: f64) -> Result<Var> {
        let ta = self.value(a);
        let n = ta.last_dim();
        if groups == 0 || n % groups != 0 {
            return Err(shape_err("layer_norm", format!("last axis {n} not divisible into {groups} groups")));
        }
        let w = n / groups;
        let mut out = Vec::with_capacity(ta.len());
        let mut inv_std = Vec::with_capacity(ta.len() / w);
        for seg in ta.data().chunks(w) {
            let mu = seg.iter().sum::<f64>() / w as f64;
            let var = seg.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / w as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            inv_std.push(inv);
            out.extend(seg.iter().map(|x| (x - mu) * inv));
        }
        let shape = ta.shape().to_vec();
        self.push("layer_norm", Tensor::from_parts(shape, out), Op::LayerNorm { input: a, groups, inv_std })
    }

    /// Mean negative log-probability of the labelled classes, with
    /// probabilities floored at `eps`. `probs` is `[m, classes]`.
    pub fn nll(&mut self, probs: Var, labels: &[usize], eps: f64) -> Result<Var> {
        let tp = self.value(probs);
        let (m, c) = dims2("nll", tp)?;
        if labels.len() != m {
            return Err(shape_err("nll", format!("{} labels for {m} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{c}")));
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -libm::log(tp.data()[i * c + y].max(eps)))
            .sum();
        self.push(
            "nll",
            Tensor::scalar(total / m as f64),
            Op::Nll { probs, labels: labels.to_vec(), eps },
        )
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
