use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::tape::{Op, Tape, Var};
use crate::error::{Error, Result};

/// Gradient buffers produced by [`Tape::backward`], indexed by tape node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` is on a path to the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, with zeros for tensors off the path.
    pub fn get_or_zeros(&self, v: Var) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[v.0]],
        }
    }

    pub fn take(&mut self, v: Var) -> Vec<f64> {
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; self.lens[v.0]])
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], lens: &[usize], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; lens[v.0]])
}

impl Tape {
    /// Reverse sweep from a scalar `loss`, populating gradients for every
    /// node with `requires_grad` that feeds into it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NotScalar { shape: lt.shape().to_vec() });
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.op.parents().iter().any(|p| p.0 >= i) {
                return Err(Error::Cycle { node: i });
            }
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads, &lens);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads, lens })
    }

    fn propagate(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>], lens: &[usize]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        let shape = |v: Var| self.nodes[v.0].value.shape();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (shape(*a)[0], shape(*a)[1]);
                let n = shape(*b)[1];
                if rg(*a) {
                    let da = kernels::matmul_nt(dy, val(*b), m, n, k);
                    add_into(slot(grads, lens, *a), &da);
                }
                if rg(*b) {
                    let db = kernels::matmul_tn(val(*a), dy, m, k, n);
                    add_into(slot(grads, lens, *b), &db);
                }
            }
            Op::Transpose(a) => {
                if rg(*a) {
                    let (m, n) = (shape(*a)[0], shape(*a)[1]);
                    let g = slot(grads, lens, *a);
                    for r in 0..m {
                        for c in 0..n {
                            g[r * n + c] += dy[c * m + r];
                        }
                    }
                }
            }
            Op::Conv1d { input, weight, bias, geom } => {
                let (dx, dw, db) = kernels::conv1d_backward(
                    val(*input),
                    val(*weight),
                    dy,
                    geom,
                    rg(*input),
                    rg(*weight),
                );
                if rg(*input) {
                    add_into(slot(grads, lens, *input), &dx);
                }
                if rg(*weight) {
                    add_into(slot(grads, lens, *weight), &dw);
                }
                if rg(*bias) {
                    add_into(slot(grads, lens, *bias), &db);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if rg(v) {
                        add_into(slot(grads, lens, v), dy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if rg(*a) {
                    add_into(slot(grads, lens, *a), dy);
                }
                if rg(*b) {
                    let g = slot(grads, lens, *b);
                    for (g, d) in g.iter_mut().zip(dy) {
                        *g -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    let bv = val(*b);
                    let g = slot(grads, lens, *a);
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(bv) {
                        *g += d * x;
                    }
                }
                if rg(*b) {
                    let av = val(*a);
                    let g = slot(grads, lens, *b);
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(av) {
                        *g += d * x;
                    }
                }
            }
            Op::AddRow(a, r) => {
                if rg(*a) {
                    add_into(slot(grads, lens, *a), dy);
                }
                if rg(*r) {
                    let n = lens[r.0];
                    let g = slot(grads, lens, *r);
                    for row in dy.chunks(n) {
                        add_into(g, row);
                    }
                }
            }
            Op::MulRow(a, r) => {
                let n = lens[r.0];
                if rg(*a) {
                    let rv = val(*r);
                    let g = slot(grads, lens, *a);
                    for (grow, drow) in g.chunks_mut(n).zip(dy.chunks(n)) {
                        for ((g, d), s) in grow.iter_mut().zip(drow).zip(rv) {
                            *g += d * s;
                        }
                    }
                }
                if rg(*r) {
                    let av = val(*a);
                    let g = slot(grads, lens, *r);
                    for (arow, drow) in av.chunks(n).zip(dy.chunks(n)) {
                        for ((g, d), x) in g.iter_mut().zip(drow).zip(arow) {
                            *g += d * x;
                        }
                    }
                }
            }
            Op::MulCol(a, c) => {
                let n = shape(*a)[1];
                if rg(*a) {
                    let cv = val(*c);
                    let g = slot(grads, lens, *a);
                    for ((grow, drow), &s) in g.chunks_mut(n).zip(dy.chunks(n)).zip(cv) {
                        for (g, d) in grow.iter_mut().zip(drow) {
                            *g += d * s;
                        }
                    }
                }
                if rg(*c) {
                    let av = val(*a);
                    let g = slot(grads, lens, *c);
                    for ((g, drow), arow) in g.iter_mut().zip(dy.chunks(n)).zip(av.chunks(n)) {
                        *g += drow.iter().zip(arow).map(|(d, x)| d * x).sum::<f64>();
                    }
                }
            }
            Op::Affine(a, scale) => {
                if rg(*a) {
                    let g = slot(grads, lens, *a);
                    for (g, d) in g.iter_mut().zip(dy) {
                        *g += scale * d;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = shape(parts[0])[0];
                let total: usize = dy.len() / m;
                let mut offset = 0;
                for &p in parts {
                    let w = shape(p)[1];
                    if rg(p) {
                        let g = slot(grads, lens, p);
                        for r in 0..m {
                            add_into(&mut g[r * w..(r + 1) * w], &dy[r * total + offset..r * total + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = lens[p.0];
                    if rg(p) {
                        add_into(slot(grads, lens, p), &dy[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::SliceCols { input, start } => {
                if rg(*input) {
                    let n = shape(*input)[1];
                    let len = node.value.shape()[1];
                    let g = slot(grads, lens, *input);
                    for (grow, drow) in g.chunks_mut(n).zip(dy.chunks(len)) {
                        add_into(&mut grow[*start..start + len], drow);
                    }
                }
            }
            Op::SliceRows { input, start } => {
                if rg(*input) {
                    let n = shape(*input)[1];
                    let g = slot(grads, lens, *input);
                    add_into(&mut g[start * n..start * n + dy.len()], dy);
                }
            }
            Op::Tanh(a) => {
                if rg(*a) {
                    let g = slot(grads, lens, *a);
                    for ((g, d), t) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * (1.0 - t * t);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if rg(*a) {
                    let g = slot(grads, lens, *a);
                    for ((g, d), s) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * s * (1.0 - s);
                    }
                }
            }
            Op::Prelu(a, s) => {
                let n = lens[s.0];
                let (av, sv) = (val(*a), val(*s));
                if rg(*a) {
                    let g = slot(grads, lens, *a);
                    for ((grow, drow), arow) in g.chunks_mut(n).zip(dy.chunks(n)).zip(av.chunks(n)) {
                        for (((g, d), &x), sl) in grow.iter_mut().zip(drow).zip(arow).zip(sv) {
                            *g += if x > 0.0 { *d } else { d * sl };
                        }
                    }
                }
                if rg(*s) {
                    let g = slot(grads, lens, *s);
                    for (drow, arow) in dy.chunks(n).zip(av.chunks(n)) {
                        for ((g, d), &x) in g.iter_mut().zip(drow).zip(arow) {
                            if x <= 0.0 {
                                *g += d * x;
                            }
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if rg(*a) {
                    let n = node.value.last_dim();
                    let g = slot(grads, lens, *a);
                    for ((grow, drow), yrow) in g.chunks_mut(n).zip(dy.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = drow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                        for ((g, d), y) in grow.iter_mut().zip(drow).zip(yrow) {
                            *g += y * (d - dot);
                        }
                    }
                }
            }
            Op::Mean(a) => {
                if rg(*a) {
                    let s = dy[0] / lens[a.0] as f64;
                    for g in slot(grads, lens, *a).iter_mut() {
                        *g += s;
                    }
                }
            }
            Op::Sum(a) => {
                if rg(*a) {
                    for g in slot(grads, lens, *a).iter_mut() {
                        *g += dy[0];
                    }
                }
            }
            Op::Reshape(a) => {
                if rg(*a) {
                    add_into(slot(grads, lens, *a), dy);
                }
            }
            Op::LayerNorm { input, groups, inv_std } => {
                if rg(*input) {
                    let w = node.value.last_dim() / groups;
                    let g = slot(grads, lens, *input);
                    for (((grow, drow), yrow), &inv) in
                        g.chunks_mut(w).zip(dy.chunks(w)).zip(y.chunks(w)).zip(inv_std)
                    {
                        let md = drow.iter().sum::<f64>() / w as f64;
                        let mdy = drow.iter().zip(yrow).map(|(d, y)| d * y).sum::<f64>() / w as f64;
                        for ((g, d), y) in grow.iter_mut().zip(drow).zip(yrow) {
                            *g += inv * (d - md - y * mdy);
                        }
                    }
                }
            }
            Op::Nll { probs, labels, eps } => {
                if rg(*probs) {
                    let c = shape(*probs)[1];
                    let m = labels.len() as f64;
                    let pv = val(*probs);
                    let g = slot(grads, lens, *probs);
                    for (r, &lab) in labels.iter().enumerate() {
                        let p = pv[r * c + lab];
                        if p > *eps {
                            g[r * c + lab] -= dy[0] / (m * p);
                        }
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
