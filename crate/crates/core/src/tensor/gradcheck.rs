//! Central finite-difference gradient checker.
//!
//! Only forward evaluations are used on the numeric side, so the result is
//! independent of the backward implementation it is compared against.

use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Outcome of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares analytic and numeric gradients of `Σ build(inputs) ∘ R` with a
/// fixed random projection `R`, for every element of every input listed in
/// `wrt` (all inputs when `None`).
pub fn check<F>(build: F, inputs: &[Tensor], step: f64, seed: u64, wrt: Option<&[usize]>) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = Rng::seeded(seed);
    let eval = |vals: &[Tensor], projection: Option<&Tensor>| -> Result<(Tape, Vec<Var>, Var, Var)> {
        let mut tape = Tape::new();
        let vars = vals
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &vars)?;
        let shape = tape.value(out).shape().to_vec();
        let proj = match projection {
            Some(p) => p.clone(),
            None => Tensor::zeros(&shape),
        };
        let p = tape.constant(proj)?;
        let prod = tape.mul(out, p)?;
        let loss = tape.sum(prod)?;
        Ok((tape, vars, out, loss))
    };

    // First pass only fixes the output shape for the projection.
    let (tape0, _, out0, _) = eval(inputs, None)?;
    let out_shape = tape0.value(out0).shape().to_vec();
    let projection = Tensor::from_fn(&out_shape, |_| rng.uniform_range(-1.0, 1.0));

    let (tape, vars, _, loss) = eval(inputs, Some(&projection))?;
    let grads = tape.backward(loss)?;

    let all: Vec<usize> = (0..inputs.len()).collect();
    let targets = wrt.unwrap_or(&all);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for &ti in targets {
        let analytic = grads.get_or_zeros(vars[ti]);
        for e in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[e];
            work[ti].data_mut()[e] = orig + step;
            let (tp, _, _, lp) = eval(&work, Some(&projection))?;
            let plus = tp.value(lp).data()[0];
            work[ti].data_mut()[e] = orig - step;
            let (tm, _, _, lm) = eval(&work, Some(&projection))?;
            let minus = tm.value(lm).data()[0];
            work[ti].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic[e], numeric));
            checked += 1;
        }
    }
    Ok(GradCheck { max_rel_error: worst, checked })
}

fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

/// Values bounded away from zero, for ops with a kink at the origin.
fn random_off_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let mag = rng.uniform_range(0.05, 1.5);
        if rng.uniform() < 0.5 { -mag } else { mag }
    })
}

/// One random small instance of every differentiable operation, as
/// `(name, kind, inputs)`.
pub fn random_instances(rng: &mut Rng) -> Vec<(&'static str, super::OpKind, Vec<Tensor>)> {
    use super::{OpKind, Padding};
    let mut dim = |lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let (m, k, n) = (dim(1, 4), dim(1, 4), dim(1, 4));
    let (batch, len, cin, cout, width, stride) = (dim(1, 2), dim(6, 14), dim(1, 3), dim(1, 3), dim(2, 5), dim(1, 3));
    let groups = dim(1, 3);
    let gw = dim(2, 4);
    let widths = [dim(1, 3), dim(1, 3)];
    let rows = [dim(1, 3), dim(1, 3)];
    let start = dim(0, n.saturating_sub(1));
    let labels: Vec<usize> = (0..m).map(|_| dim(0, 4)).collect();
    let padding = if dim(0, 1) == 0 { Padding::Same } else { Padding::Valid };
    let rstart = if m > 1 { dim(0, m - 1) } else { 0 };

    let mut out: Vec<(&'static str, OpKind, Vec<Tensor>)> = Vec::new();
    out.push(("matmul", OpKind::MatMul, alloc::vec![random_tensor(rng, &[m, k], -1.0, 1.0), random_tensor(rng, &[k, n], -1.0, 1.0)]));
    out.push(("transpose", OpKind::Transpose, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push((
        "conv1d",
        OpKind::Conv1d { stride, padding },
        alloc::vec![
            random_tensor(rng, &[batch, len, cin], -1.0, 1.0),
            random_tensor(rng, &[width, cin, cout], -1.0, 1.0),
            random_tensor(rng, &[cout], -0.5, 0.5),
        ],
    ));
    out.push(("add", OpKind::Add, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push(("sub", OpKind::Sub, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push(("mul", OpKind::Mul, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push(("add_row", OpKind::AddRow, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[n], -1.0, 1.0)]));
    out.push(("mul_row", OpKind::MulRow, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[n], -1.0, 1.0)]));
    out.push(("mul_col", OpKind::MulCol, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0), random_tensor(rng, &[m, 1], -1.0, 1.0)]));
    out.push(("affine", OpKind::Affine { scale: -1.7, shift: 0.3 }, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push((
        "concat_cols",
        OpKind::ConcatCols,
        alloc::vec![random_tensor(rng, &[m, widths[0]], -1.0, 1.0), random_tensor(rng, &[m, widths[1]], -1.0, 1.0)],
    ));
    out.push((
        "concat_rows",
        OpKind::ConcatRows,
        alloc::vec![random_tensor(rng, &[rows[0], n], -1.0, 1.0), random_tensor(rng, &[rows[1], n], -1.0, 1.0)],
    ));
    out.push((
        "slice_cols",
        OpKind::SliceCols { start, len: n - start },
        alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)],
    ));
    out.push((
        "slice_rows",
        OpKind::SliceRows { start: rstart, len: m - rstart },
        alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)],
    ));
    out.push(("tanh", OpKind::Tanh, alloc::vec![random_tensor(rng, &[m, n], -2.0, 2.0)]));
    out.push(("sigmoid", OpKind::Sigmoid, alloc::vec![random_tensor(rng, &[m, n], -3.0, 3.0)]));
    out.push(("prelu", OpKind::Prelu, alloc::vec![random_off_zero(rng, &[m, n]), random_tensor(rng, &[n], 0.0, 0.5)]));
    out.push(("softmax", OpKind::Softmax, alloc::vec![random_tensor(rng, &[m, n], -2.0, 2.0)]));
    out.push(("mean", OpKind::Mean, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push(("sum", OpKind::Sum, alloc::vec![random_tensor(rng, &[m, n], -1.0, 1.0)]));
    out.push(("flatten", OpKind::Flatten, alloc::vec![random_tensor(rng, &[m, k, n], -1.0, 1.0)]));
    out.push((
        "layer_norm",
        OpKind::LayerNorm { groups, eps: 1e-5 },
        alloc::vec![random_tensor(rng, &[m, groups * gw], -1.0, 1.0)],
    ));
    out.push((
        "nll",
        OpKind::Nll { labels, eps: 1e-12 },
        alloc::vec![random_tensor(rng, &[m, 5], 0.05, 1.0)],
    ));
    out
}
