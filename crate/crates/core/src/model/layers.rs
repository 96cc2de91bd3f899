//! Differentiable building blocks. Each block stores indices into the
//! model's [`ParamSet`](super::ParamSet) and is evaluated against the
//! registered parameter [`Var`]s of one tape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{glorot, ParamSet};
use crate::error::Result;
use crate::rng::Rng;
use crate::signal::FREQ_BINS;
use crate::tensor::{dropout_mask, Padding, Tape, Tensor, Var};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Dropout for one forward pass: active when it carries a random stream.
pub struct Dropout<'a> {
    rng: Option<&'a mut Rng>,
}

impl<'a> Dropout<'a> {
    pub fn on(rng: &'a mut Rng) -> Self {
        Self { rng: Some(rng) }
    }

    pub fn off() -> Self {
        Self { rng: None }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(tape.value(x).shape(), rate, true, rng)?;
        let m = tape.constant(mask)?;
        tape.mul(x, m)
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub slope: usize,
    pub stride: usize,
}

impl Conv {
    pub fn new(ps: &mut ParamSet, rng: &mut Rng, name: &str, width: usize, cin: usize, cout: usize, stride: usize) -> Self {
        Self {
            weight: ps.push(format!("{name}/weight"), glorot(rng, &[width, cin, cout], width * cin, width * cout)),
            bias: ps.push(format!("{name}/bias"), Tensor::zeros(&[cout])),
            slope: ps.push(format!("{name}/slope"), Tensor::full(&[cout], 0.25)),
            stride,
        }
    }

    /// Convolution, PReLU, dropout.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, rate: f64, drop: &mut Dropout) -> Result<Var> {
        let y = tape.conv1d(x, p[self.weight], p[self.bias], self.stride, Padding::Same)?;
        let y = tape.prelu(y, p[self.slope])?;
        drop.apply(tape, y, rate)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, output: usize) -> Self {
        Self {
            weight: ps.push(format!("{name}/weight"), glorot(rng, &[input, output], input, output)),
            bias: ps.push(format!("{name}/bias"), Tensor::zeros(&[output])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        tape.add_row(y, p[self.bias])
    }
}

/// GRU cell: `z, r = σ(x Wx + h Wh)`, `ĥ = tanh(x Wxh + (r∘h) Whh)`,
/// `h' = z∘h + (1-z)∘ĥ`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub hidden: usize,
    /// `[in, 3H]`: update, reset, candidate.
    pub wx: usize,
    /// `[H, 2H]`: update, reset.
    pub wh_gates: usize,
    /// `[H, H]`: candidate.
    pub wh_cand: usize,
    /// `[3H]`.
    pub bias: usize,
}

impl GruCell {
    pub fn new(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, hidden: usize) -> Self {
        let h = hidden;
        Self {
            hidden,
            wx: ps.push(format!("{name}/wx"), glorot(rng, &[input, 3 * h], input, 3 * h)),
            wh_gates: ps.push(format!("{name}/wh_gates"), glorot(rng, &[h, 2 * h], h, 2 * h)),
            wh_cand: ps.push(format!("{name}/wh_cand"), glorot(rng, &[h, h], h, h)),
            bias: ps.push(format!("{name}/bias"), Tensor::zeros(&[3 * h])),
        }
    }

    /// Input projection for every row at once (bias included).
    pub fn project(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p[self.wx])?;
        tape.add_row(xw, p[self.bias])
    }

    /// One step from a projected input block `xg [B, 3H]`.
    pub fn step(&self, tape: &mut Tape, p: &[Var], xg: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let hg = tape.matmul(h, p[self.wh_gates])?;
        let xzr = tape.slice_cols(xg, 0, 2 * hd)?;
        let pre = tape.add(xzr, hg)?;
        let zr = tape.sigmoid(pre)?;
        let z = tape.slice_cols(zr, 0, hd)?;
        let r = tape.slice_cols(zr, hd, hd)?;
        let rh = tape.mul(r, h)?;
        let hc = tape.matmul(rh, p[self.wh_cand])?;
        let xc = tape.slice_cols(xg, 2 * hd, hd)?;
        let cpre = tape.add(xc, hc)?;
        let cand = tape.tanh(cpre)?;
        let diff = tape.sub(h, cand)?;
        let zd = tape.mul(z, diff)?;
        tape.add(cand, zd)
    }
}

/// LSTM cell with gates ordered input, forget, candidate, output. With
/// `norm`, each gate's pre-activation is layer-normalized and `bias` acts
/// as the normalization shift.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub hidden: usize,
    pub wx: usize,
    pub wh: usize,
    pub bias: usize,
    pub gain: Option<usize>,
}

impl LstmCell {
    pub fn new(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, hidden: usize, norm: bool) -> Self {
        let h = hidden;
        let mut bias = Tensor::zeros(&[4 * h]);
        for v in &mut bias.data_mut()[h..2 * h] {
            *v = 1.0;
        }
        Self {
            hidden,
            wx: ps.push(format!("{name}/wx"), glorot(rng, &[input, 4 * h], input, 4 * h)),
            wh: ps.push(format!("{name}/wh"), glorot(rng, &[h, 4 * h], h, 4 * h)),
            bias: ps.push(format!("{name}/bias"), bias),
            gain: norm.then(|| ps.push(format!("{name}/gain"), Tensor::full(&[4 * h], 1.0))),
        }
    }

    pub fn project(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        tape.matmul(x, p[self.wx])
    }

    /// One step; returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, p: &[Var], xg: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let hw = tape.matmul(h, p[self.wh])?;
        let mut pre = tape.add(xg, hw)?;
        if let Some(gain) = self.gain {
            pre = tape.layer_norm(pre, 4, LN_EPS)?;
            pre = tape.mul_row(pre, p[gain])?;
        }
        let pre = tape.add_row(pre, p[self.bias])?;
        let gates = tape.sigmoid(pre)?;
        let i = tape.slice_cols(gates, 0, hd)?;
        let f = tape.slice_cols(gates, hd, hd)?;
        let o = tape.slice_cols(gates, 3 * hd, hd)?;
        let gpre = tape.slice_cols(pre, 2 * hd, hd)?;
        let g = tape.tanh(gpre)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

#[derive(Clone, Debug)]
pub enum Cell {
    Gru(GruCell),
    Lstm(LstmCell),
}

impl Cell {
    fn hidden(&self) -> usize {
        match self {
            Cell::Gru(c) => c.hidden,
            Cell::Lstm(c) => c.hidden,
        }
    }
}

/// Bidirectional recurrence over `steps` blocks of `batch` contiguous rows.
#[derive(Clone, Debug)]
pub struct BiRnn {
    pub fwd: Cell,
    pub bwd: Cell,
}

impl BiRnn {
    pub fn gru(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: Cell::Gru(GruCell::new(ps, rng, &format!("{name}/fwd"), input, hidden)),
            bwd: Cell::Gru(GruCell::new(ps, rng, &format!("{name}/bwd"), input, hidden)),
        }
    }

    pub fn lstm(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, hidden: usize, norm: bool) -> Self {
        Self {
            fwd: Cell::Lstm(LstmCell::new(ps, rng, &format!("{name}/fwd"), input, hidden, norm)),
            bwd: Cell::Lstm(LstmCell::new(ps, rng, &format!("{name}/bwd"), input, hidden, norm)),
        }
    }

    /// Output at step `s` is `[forward state at s ⊕ backward state at s]`,
    /// one `[batch, 2H]` block per step.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, steps: usize, batch: usize) -> Result<Vec<Var>> {
        let fwd = run_direction(&self.fwd, tape, p, x, steps, batch, false)?;
        let bwd = run_direction(&self.bwd, tape, p, x, steps, batch, true)?;
        fwd.into_iter().zip(bwd).map(|(f, b)| tape.concat_cols(&[f, b])).collect()
    }
}

fn run_direction(
    cell: &Cell,
    tape: &mut Tape,
    p: &[Var],
    x: Var,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let hd = cell.hidden();
    let proj = match cell {
        Cell::Gru(c) => c.project(tape, p, x)?,
        Cell::Lstm(c) => c.project(tape, p, x)?,
    };
    let zeros = tape.constant(Tensor::zeros(&[batch, hd]))?;
    let mut h = zeros;
    let mut c = zeros;
    let mut out = vec![zeros; steps];
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for s in order {
        let xg = tape.slice_rows(proj, s * batch, batch)?;
        match cell {
            Cell::Gru(g) => h = g.step(tape, p, xg, h)?,
            Cell::Lstm(l) => (h, c) = l.step(tape, p, xg, h, c)?,
        }
        out[s] = h;
    }
    Ok(out)
}

/// Softmax attention against a trainable context vector:
/// `α_t = softmax_t(tanh(z_t Wa + ba) · ae)`, pooled `Σ_t α_t z_t`.
#[derive(Clone, Debug)]
pub struct Attention {
    pub proj: Linear,
    pub context: usize,
}

impl Attention {
    pub fn new(ps: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, size: usize) -> Self {
        Self {
            proj: Linear::new(ps, rng, &format!("{name}/proj"), input, size),
            context: ps.push(format!("{name}/context"), glorot(rng, &[size, 1], size, 1)),
        }
    }

    /// Pools `z` (one `[N, d]` block per step). Returns `(pooled [N, d], α [N, T])`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], z: &[Var]) -> Result<(Var, Var)> {
        let steps = z.len();
        let n = tape.value(z[0]).shape()[0];
        let stacked = tape.concat_rows(z)?;
        let a = self.proj.forward(tape, p, stacked)?;
        let a = tape.tanh(a)?;
        let scores = tape.matmul(a, p[self.context])?;
        let scores = tape.reshape(scores, &[steps, n])?;
        let scores = tape.transpose(scores)?;
        let alpha = tape.softmax(scores)?;
        let mut pooled = None;
        for (t, &zt) in z.iter().enumerate() {
            let w = tape.slice_cols(alpha, t, 1)?;
            let term = tape.mul_col(zt, w)?;
            pooled = Some(match pooled {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((pooled.expect("at least one step"), alpha))
    }
}

/// Per-channel learnable filterbank with non-negative weights `W∘W`,
/// `[F, D]`, initialized so that `W∘W` is a triangular linear-frequency bank.
#[derive(Clone, Debug)]
pub struct Filterbank {
    pub weights: Vec<usize>,
}

/// Triangular bank over `bins` linear-frequency bins: `filters` triangles
/// with evenly spaced centres, each reaching zero at its neighbours' centres.
pub fn triangular_bank(bins: usize, filters: usize) -> Tensor {
    let spacing = (bins - 1) as f64 / (filters + 1) as f64;
    Tensor::from_fn(&[bins, filters], |i| {
        let (f, d) = (i / filters, i % filters);
        let centre = (d + 1) as f64 * spacing;
        (1.0 - libm::fabs(f as f64 - centre) / spacing).max(0.0)
    })
}

impl Filterbank {
    pub fn new(ps: &mut ParamSet, name: &str, channels: usize, filters: usize) -> Self {
        let mut init = triangular_bank(FREQ_BINS, filters);
        for v in init.data_mut() {
            *v = libm::sqrt(*v);
        }
        Self {
            weights: (0..channels).map(|c| ps.push(format!("{name}{c}"), init.clone())).collect(),
        }
    }

    /// Maps per-channel `[rows, F]` inputs to `[rows, D·C]`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], channels: &[Var]) -> Result<Var> {
        let mut parts = Vec::with_capacity(channels.len());
        for (&x, &w) in channels.iter().zip(&self.weights) {
            let nonneg = tape.mul(p[w], p[w])?;
            parts.push(tape.matmul(x, nonneg)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_cols(&parts)
        }
    }
}

