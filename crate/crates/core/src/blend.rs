//! Adaptive loss weighting for the three classification branches.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Floor applied to the generalization measure; its square floors `O²`.
pub const EPS_WEIGHT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Branch {
    Raw,
    Tf,
    Joint,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Raw, Branch::Tf, Branch::Joint];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Raw => "raw",
            Branch::Tf => "tf",
            Branch::Joint => "joint",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }
}

/// Branch weights `(w1, w2, w*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendWeights(pub [f64; 3]);

impl BlendWeights {
    pub const EQUAL: BlendWeights = BlendWeights([1.0 / 3.0; 3]);

    /// Validates and normalizes non-negative weights to sum to 1.
    pub fn normalized(raw: [f64; 3]) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let z: f64 = raw.iter().sum();
        if z <= 0.0 {
            return Err(Error::InvalidArgument("weights must not all be zero".into()));
        }
        Ok(Self(raw.map(|w| w / z)))
    }

    pub fn get(&self, b: Branch) -> f64 {
        self.0[b.index()]
    }
}

/// Per-evaluation branch losses, plus the weights emitted at each
/// evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub steps: Vec<usize>,
    pub train: [Vec<f64>; 3],
    pub valid: [Vec<f64>; 3],
    pub weights: Vec<BlendWeights>,
}

impl LossTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded evaluations.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn record(&mut self, step: usize, train: [f64; 3], valid: [f64; 3]) -> Result<()> {
        if train.iter().chain(&valid).any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidArgument("losses must be finite and non-negative".into()));
        }
        if self.steps.last().is_some_and(|&s| s >= step) {
            return Err(Error::InvalidArgument("evaluation steps must increase".into()));
        }
        self.steps.push(step);
        for k in 0..3 {
            self.train[k].push(train[k]);
            self.valid[k].push(valid[k]);
        }
        Ok(())
    }

    /// The first `n` evaluations, without weights.
    pub fn prefix(&self, n: usize) -> LossTrace {
        LossTrace {
            steps: self.steps[..n].to_vec(),
            train: [0, 1, 2].map(|k| self.train[k][..n].to_vec()),
            valid: [0, 1, 2].map(|k| self.valid[k][..n].to_vec()),
            weights: Vec::new(),
        }
    }
}

/// Least-squares slope of `values` against `0..len`.
pub fn fit_line_slope(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument("line fit needs at least two points".into()));
    }
    let xm = (n - 1) as f64 / 2.0;
    let ym = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Trailing moving average; the first `window - 1` points average what is
/// available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Unnormalized weight `max(G, ε)/max(O², ε²)`.
pub fn raw_weight(g: f64, o: f64) -> f64 {
    g.max(EPS_WEIGHT) / (o * o).max(EPS_WEIGHT * EPS_WEIGHT)
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let z: f64 = raw.iter().sum();
    raw.iter().map(|w| w / z).collect()
}

/// First-order measures `(G, O)` of one branch against evaluation 0.
pub fn measures_v1(train: &[f64], valid: &[f64]) -> Option<(f64, f64)> {
    let n = valid.len().checked_sub(1)?;
    if train.len() != valid.len() {
        return None;
    }
    let g = valid[0] - valid[n];
    let o = (valid[n] - train[n]) - (valid[0] - train[0]);
    Some((g, o))
}

/// First-order weights for any number of branches, each given as
/// `(train, valid)` loss arrays. Equal weights when nothing is recorded.
pub fn weights_v1_for(branches: &[(&[f64], &[f64])]) -> Vec<f64> {
    let raw: Option<Vec<f64>> = branches
        .iter()
        .map(|(t, v)| measures_v1(t, v).map(|(g, o)| raw_weight(g, o)))
        .collect();
    match raw {
        Some(r) if !r.is_empty() => normalize(&r),
        _ => alloc::vec![1.0 / branches.len() as f64; branches.len()],
    }
}

pub fn weights_v1(trace: &LossTrace) -> BlendWeights {
    let b: Vec<(&[f64], &[f64])> = (0..3).map(|k| (&trace.train[k][..], &trace.valid[k][..])).collect();
    let w = weights_v1_for(&b);
    BlendWeights([w[0], w[1], w[2]])
}

/// Tangent reference of one branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchState {
    /// Evaluation index of the reference.
    pub n0: usize,
    pub tan_train: f64,
    pub tan_valid: f64,
}

/// Second-order scheduler state; references are unset until the warm-up
/// ends.
#[derive(Clone, Debug, PartialEq)]
pub struct V2State {
    pub window: usize,
    pub branches: Option<[BranchState; 3]>,
}

impl V2State {
    pub fn new(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::InvalidArgument("window must be at least 2".into()));
        }
        Ok(Self { window, branches: None })
    }
}

/// Loss tangents at the latest evaluation: slope over the last `window`
/// points of the moving-averaged curve.
pub fn tangent(values: &[f64], window: usize) -> Result<f64> {
    if values.len() < window {
        return Err(Error::InvalidArgument("fewer points than the window".into()));
    }
    let smooth = moving_average(values, window);
    fit_line_slope(&smooth[smooth.len() - window..])
}

/// Second-order weights from tangent measures, updating `state`.
pub fn weights_v2(trace: &LossTrace, state: &mut V2State) -> Result<BlendWeights> {
    let n = trace.len();
    let w = state.window;
    if n < w {
        return Ok(BlendWeights::EQUAL);
    }
    let mut current = [BranchState { n0: n - 1, tan_train: 0.0, tan_valid: 0.0 }; 3];
    for (k, cur) in current.iter_mut().enumerate() {
        cur.tan_train = tangent(&trace.train[k], w)?;
        cur.tan_valid = tangent(&trace.valid[k], w)?;
    }
    let refs = state.branches.get_or_insert(current);
    let mut raw = [0.0; 3];
    for k in 0..3 {
        let (cur, r) = (current[k], &mut refs[k]);
        let g = cur.tan_valid - r.tan_valid;
        let o = (cur.tan_valid - cur.tan_train) - (r.tan_valid - r.tan_train);
        raw[k] = raw_weight(libm::fabs(g), o);
        if r.tan_valid > cur.tan_valid {
            *r = cur;
        }
    }
    BlendWeights::normalized(raw)
}

/// Source of per-evaluation weights in a training run.
#[derive(Clone, Debug, PartialEq)]
pub enum Scheduler {
    Fixed(BlendWeights),
    V1,
    V2(V2State),
}

impl Scheduler {
    /// Weights after the latest evaluation in `trace`.
    pub fn update(&mut self, trace: &LossTrace) -> Result<BlendWeights> {
        match self {
            Scheduler::Fixed(w) => Ok(*w),
            Scheduler::V1 => Ok(weights_v1(trace)),
            Scheduler::V2(s) => weights_v2(trace, s),
        }
    }
}

/// Recomputes the weight sequence of a recorded trace by feeding its
/// prefixes to a fresh scheduler.
pub fn replay(trace: &LossTrace, mut scheduler: Scheduler) -> Result<Vec<BlendWeights>> {
    (1..=trace.len()).map(|n| scheduler.update(&trace.prefix(n))).collect()
}

/// `Σ_k w_k ℒ_k`, with the weights entering as constants.
pub fn weighted_total_loss(tape: &mut Tape, losses: [Var; 3], weights: BlendWeights) -> Result<Var> {
    let mut total = tape.scale(losses[0], weights.0[0])?;
    for k in 1..3 {
        let term = tape.scale(losses[k], weights.0[k])?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}
