//! Subject splits, sequence windows and the training loop for every mode.

use alloc::format;
use alloc::vec::Vec;

use crate::blend::{weighted_total_loss, BlendWeights, LossTrace, Scheduler, V2State};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::model::{self, Dropout, Model, ModelConfig, SequenceBatch, SequenceView, CLASSES, EPS_LOG};
use crate::rng::Rng;
use crate::signal::{fit_normalization, stft_log, NormalizationStats, RawEpoch, TfImage};
use crate::synth::Subject;
use crate::tensor::{Adam, AdamConfig, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    RawOnly,
    TfOnly,
    NaiveFusion,
    BlendV1,
    BlendV2,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::RawOnly, Mode::TfOnly, Mode::NaiveFusion, Mode::BlendV1, Mode::BlendV2];

    pub fn name(self) -> &'static str {
        match self {
            Mode::RawOnly => "raw_only",
            Mode::TfOnly => "tf_only",
            Mode::NaiveFusion => "naive_fusion",
            Mode::BlendV1 => "blend_v1",
            Mode::BlendV2 => "blend_v2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_blend(self) -> bool {
        matches!(self, Mode::BlendV1 | Mode::BlendV2)
    }
}

/// Which probabilities are scored at evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalHead {
    Raw,
    Tf,
    Joint,
    Ensemble,
}

impl EvalHead {
    pub fn for_mode(mode: Mode, self_ensemble: bool) -> Self {
        match mode {
            Mode::RawOnly => EvalHead::Raw,
            Mode::TfOnly => EvalHead::Tf,
            _ if self_ensemble => EvalHead::Ensemble,
            _ => EvalHead::Joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub mode: Mode,
    /// Replaces the adaptive scheduler of a blend mode by constant weights.
    pub pinned_weights: Option<BlendWeights>,
    pub batch_size: usize,
    pub steps: usize,
    /// Training steps between evaluations.
    pub eval_every: usize,
    /// Line-fit window and warm-up length, in evaluations.
    pub window: usize,
    /// Fraction of training sequences used to estimate training losses.
    pub train_subset: f64,
    /// Stop after this many evaluations without a validation accuracy gain.
    pub early_stop: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub self_ensemble: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            mode: Mode::BlendV2,
            pinned_weights: None,
            batch_size: 32,
            steps: 1000,
            eval_every: 100,
            window: 20,
            train_subset: 0.1,
            early_stop: None,
            adam: AdamConfig::default(),
            seed: 0,
            self_ensemble: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be positive");
        }
        if self.window < 2 {
            return bad("window must be at least 2");
        }
        if !(self.train_subset > 0.0 && self.train_subset <= 1.0) {
            return bad("train_subset must lie in (0, 1]");
        }
        if self.pinned_weights.is_some() && !self.mode.is_blend() {
            return bad("pinned weights apply to blend modes only");
        }
        if self.early_stop == Some(0) {
            return bad("early_stop patience must be positive");
        }
        Ok(())
    }

    fn scheduler(&self) -> Result<Scheduler> {
        Ok(match (self.mode, self.pinned_weights) {
            (_, Some(w)) => Scheduler::Fixed(w),
            (Mode::BlendV1, None) => Scheduler::V1,
            (Mode::BlendV2, None) => Scheduler::V2(V2State::new(self.window)?),
            (Mode::RawOnly, None) => Scheduler::Fixed(BlendWeights([1.0, 0.0, 0.0])),
            (Mode::TfOnly, None) => Scheduler::Fixed(BlendWeights([0.0, 1.0, 0.0])),
            (Mode::NaiveFusion, None) => Scheduler::Fixed(BlendWeights([0.0, 0.0, 1.0])),
        })
    }
}

/// A recording with both views computed; `tf` is not yet normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSubject {
    pub labels: Vec<u8>,
    pub raw: Vec<RawEpoch>,
    pub tf: Vec<TfImage>,
}

impl PreparedSubject {
    pub fn from_synthetic(s: &Subject) -> Result<Self> {
        Ok(Self {
            labels: s.labels.clone(),
            raw: s.raw.clone(),
            tf: s.spectral.iter().map(stft_log).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn prepare(subjects: &[Subject]) -> Result<Vec<PreparedSubject>> {
    subjects.iter().map(PreparedSubject::from_synthetic).collect()
}

/// Subject indices of each partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Random disjoint split with the given partition sizes.
    pub fn random(n_subjects: usize, train: usize, valid: usize, test: usize, seed: u64) -> Result<Self> {
        if train == 0 || valid == 0 || test == 0 || train + valid + test > n_subjects {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n_subjects} subjects into {train}/{valid}/{test}"
            )));
        }
        let mut ids: Vec<usize> = (0..n_subjects).collect();
        Rng::seeded(seed).shuffle(&mut ids);
        Ok(Self {
            train: ids[..train].to_vec(),
            valid: ids[train..train + valid].to_vec(),
            test: ids[train + valid..train + valid + test].to_vec(),
        })
    }

    /// Fold `fold` of `k`: a contiguous block of a seeded permutation is the
    /// test set, the next `valid` subjects validate, the rest train.
    pub fn k_fold(n_subjects: usize, k: usize, fold: usize, valid: usize, seed: u64) -> Result<Self> {
        if k < 2 || fold >= k || n_subjects < k {
            return Err(Error::InvalidArgument(format!("invalid fold {fold} of {k} over {n_subjects} subjects")));
        }
        let mut ids: Vec<usize> = (0..n_subjects).collect();
        Rng::seeded(seed).shuffle(&mut ids);
        let (lo, hi) = (fold * n_subjects / k, (fold + 1) * n_subjects / k);
        let test: Vec<usize> = ids[lo..hi].to_vec();
        let rest: Vec<usize> = ids[hi..].iter().chain(&ids[..lo]).copied().collect();
        if valid == 0 || valid >= rest.len() {
            return Err(Error::InvalidArgument("validation size leaves no training subjects".into()));
        }
        Ok(Self { valid: rest[..valid].to_vec(), train: rest[valid..].to_vec(), test })
    }
}

/// A length-L window of one subject; only epochs from `score_from` on are
/// scored (tail windows overlap their predecessor).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub subject: usize,
    pub start: usize,
    pub score_from: usize,
}

/// Non-overlapping training windows.
pub fn training_windows(data: &[PreparedSubject], subjects: &[usize], len: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for &s in subjects {
        let n = data[s].len();
        for k in 0..n / len {
            out.push(Window { subject: s, start: k * len, score_from: 0 });
        }
    }
    out
}

/// Windows that score every epoch exactly once.
pub fn scoring_windows(data: &[PreparedSubject], subjects: &[usize], len: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for &s in subjects {
        let n = data[s].len();
        if n < len {
            return Err(Error::Data(format!("subject {s} has {n} epochs, fewer than the sequence length {len}")));
        }
        for k in 0..n / len {
            out.push(Window { subject: s, start: k * len, score_from: 0 });
        }
        if n % len != 0 {
            out.push(Window { subject: s, start: n - len, score_from: n / len * len - (n - len) });
        }
    }
    Ok(out)
}

fn assemble(data: &[PreparedSubject], windows: &[Window], len: usize) -> Result<SequenceBatch> {
    let views: Vec<SequenceView> = windows
        .iter()
        .map(|w| {
            let s = &data[w.subject];
            let r = w.start..w.start + len;
            SequenceView { raw: &s.raw[r.clone()], tf: &s.tf[r.clone()], labels: &s.labels[r] }
        })
        .collect();
    SequenceBatch::assemble(&views)
}

/// Per-branch summed losses and scored predictions over a set of windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy of the raw, time-frequency and joint heads.
    pub losses: [f64; 3],
    /// Mean cross-entropy of the evaluated head.
    pub head_loss: f64,
    pub predictions: Vec<usize>,
    pub truth: Vec<usize>,
}

impl Evaluation {
    pub fn report(&self) -> Result<MetricsReport> {
        MetricsReport::from_confusion(ConfusionMatrix::from_pairs(&self.predictions, &self.truth)?)
    }

    pub fn accuracy(&self) -> f64 {
        let hits = self.predictions.iter().zip(&self.truth).filter(|(p, t)| p == t).count();
        hits as f64 / self.truth.len().max(1) as f64
    }
}

fn row_loss(probs: &[f64], label: usize) -> f64 {
    -libm::log(probs[label].max(EPS_LOG))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Evaluation-mode scoring of `windows` in chunks of `chunk` sequences.
pub fn evaluate(
    model: &Model,
    data: &[PreparedSubject],
    windows: &[Window],
    head: EvalHead,
    chunk: usize,
) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::Empty("evaluation windows"));
    }
    let len = model.config().seq_len;
    let mut sums = [0.0; 3];
    let mut head_sum = 0.0;
    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    for group in windows.chunks(chunk.max(1)) {
        let batch = assemble(data, group, len)?;
        let heads = model.predict(&batch)?;
        let ens = if head == EvalHead::Ensemble { Some(model::self_ensemble(&heads)?) } else { None };
        let scored = match head {
            EvalHead::Raw => &heads.y1,
            EvalHead::Tf => &heads.y2,
            EvalHead::Joint => &heads.ystar,
            EvalHead::Ensemble => ens.as_ref().expect("computed above"),
        };
        let b = group.len();
        for l in 0..len {
            for (j, w) in group.iter().enumerate() {
                if l < w.score_from {
                    continue;
                }
                let row = l * b + j;
                let y = batch.labels[row];
                fn at(t: &Tensor, row: usize) -> &[f64] {
                    &t.data()[row * CLASSES..(row + 1) * CLASSES]
                }
                for (k, t) in [&heads.y1, &heads.y2, &heads.ystar].into_iter().enumerate() {
                    sums[k] += row_loss(at(t, row), y);
                }
                head_sum += row_loss(at(scored, row), y);
                predictions.push(argmax(at(scored, row)));
                truth.push(y);
            }
        }
    }
    let n = truth.len() as f64;
    Ok(Evaluation { losses: sums.map(|s| s / n), head_loss: head_sum / n, predictions, truth })
}

/// Validation summary after one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub stats: NormalizationStats,
    pub trace: LossTrace,
    pub history: Vec<EvalRecord>,
    pub test: Evaluation,
    pub steps_run: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// Validation loss of the evaluated head at the last evaluation.
    pub fn final_valid_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.valid_loss)
    }
}

/// Copies `data` with time-frequency images normalized by `stats`.
pub fn normalize_all(data: &[PreparedSubject], stats: &NormalizationStats) -> Result<Vec<PreparedSubject>> {
    data.iter()
        .map(|s| {
            Ok(PreparedSubject {
                labels: s.labels.clone(),
                raw: s.raw.clone(),
                tf: s.tf.iter().map(|i| stats.normalize(i)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Statistics over every training-subject image.
pub fn fit_training_stats(data: &[PreparedSubject], train: &[usize]) -> Result<NormalizationStats> {
    let images: Vec<TfImage> = train.iter().flat_map(|&s| data[s].tf.iter().cloned()).collect();
    fit_normalization(&images)
}

struct StepLoss {
    tape: Tape,
    params: Vec<Var>,
    total: Var,
}

fn training_loss(
    model: &Model,
    mode: Mode,
    batch: &SequenceBatch,
    weights: BlendWeights,
    drop_raw: &mut Rng,
    drop_tf: &mut Rng,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let p = model.params().register(&mut tape, true)?;
    let labels = &batch.labels;
    let total = match mode {
        Mode::RawOnly => {
            let (_, o1) = model.forward_raw(&mut tape, &p, batch, &mut Dropout::on(drop_raw))?;
            let y1 = model.head_raw(&mut tape, &p, o1)?;
            tape.nll(y1, labels, EPS_LOG)?
        }
        Mode::TfOnly => {
            let (_, _, o2) = model.forward_tf(&mut tape, &p, batch, &mut Dropout::on(drop_tf))?;
            let y2 = model.head_tf(&mut tape, &p, o2)?;
            tape.nll(y2, labels, EPS_LOG)?
        }
        Mode::NaiveFusion => {
            let (_, o1) = model.forward_raw(&mut tape, &p, batch, &mut Dropout::on(drop_raw))?;
            let (_, _, o2) = model.forward_tf(&mut tape, &p, batch, &mut Dropout::on(drop_tf))?;
            let ystar = model.head_joint(&mut tape, &p, o1, o2)?;
            tape.nll(ystar, labels, EPS_LOG)?
        }
        Mode::BlendV1 | Mode::BlendV2 => {
            let f = model.forward(&mut tape, &p, batch, &mut Dropout::on(drop_raw), &mut Dropout::on(drop_tf))?;
            let losses = model::branch_losses(&mut tape, &f, labels)?;
            weighted_total_loss(&mut tape, losses, weights)?
        }
    };
    Ok(StepLoss { tape, params: p, total })
}

/// Trains one model on `data` (time-frequency images unnormalized) and
/// scores it on the test subjects.
pub fn train(config: &TrainConfig, data: &[PreparedSubject], split: &Split) -> Result<TrainOutcome> {
    config.validate()?;
    let len = config.model.seq_len;
    if data.iter().any(|s| s.raw.first().is_some_and(|e| e.channels() != config.model.channels)) {
        return Err(Error::Data("recording channel count differs from the model".into()));
    }
    let stats = fit_training_stats(data, &split.train)?;
    let data = normalize_all(data, &stats)?;

    let mut root = Rng::seeded(config.seed);
    let init_seed = root.next_u64();
    let mut shuffle_rng = root.fork(1);
    let mut drop_raw = root.fork(2);
    let mut drop_tf = root.fork(3);
    let mut subset_rng = root.fork(4);

    let train_windows = training_windows(&data, &split.train, len);
    if train_windows.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let valid_windows = scoring_windows(&data, &split.valid, len)?;
    let test_windows = scoring_windows(&data, &split.test, len)?;
    let subset_size = (libm::round(train_windows.len() as f64 * config.train_subset) as usize).max(1);
    let mut subset = train_windows.clone();
    subset_rng.shuffle(&mut subset);
    subset.truncate(subset_size);

    let mut model = Model::new(config.model.clone(), init_seed)?;
    let mut adam = Adam::new(config.adam);
    let mut scheduler = config.scheduler()?;
    let head = EvalHead::for_mode(config.mode, config.self_ensemble);
    let chunk = config.batch_size;

    let mut trace = LossTrace::new();
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    let eval = |model: &Model, step: usize, trace: &mut LossTrace, scheduler: &mut Scheduler| -> Result<(BlendWeights, EvalRecord)> {
        let tr = evaluate(model, &data, &subset, head, chunk)?;
        let va = evaluate(model, &data, &valid_windows, head, chunk)?;
        trace.record(step, tr.losses, va.losses)?;
        let w = scheduler.update(trace)?;
        trace.weights.push(w);
        Ok((w, EvalRecord { step, valid_loss: va.head_loss, valid_accuracy: va.accuracy() }))
    };

    let (w0, r0) = eval(&model, 0, &mut trace, &mut scheduler)?;
    let mut weights = w0;
    history.push(r0);
    let mut best_acc = r0.valid_accuracy;

    let mut order = train_windows.clone();
    let mut cursor = order.len();
    let mut step = 0;
    while step < config.steps {
        if cursor >= order.len() {
            shuffle_rng.shuffle(&mut order);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch = assemble(&data, &order[cursor..end], len)?;
        cursor = end;

        let sl = training_loss(&model, config.mode, &batch, weights, &mut drop_raw, &mut drop_tf).map_err(|e| {
            Error::Data(format!("training step {} ({}): {e}", step + 1, config.mode.name()))
        })?;
        let loss = sl.tape.value(sl.total).data()[0];
        if !loss.is_finite() {
            return Err(Error::Data(format!("non-finite loss at training step {}", step + 1)));
        }
        let grads = sl.tape.backward(sl.total)?;
        let g: Vec<Vec<f64>> = sl.params.iter().map(|&v| grads.get_or_zeros(v)).collect();
        drop(sl);
        adam.step(model.params_mut().tensors_mut(), &g)?;
        step += 1;

        if step % config.eval_every == 0 || step == config.steps {
            let (w, rec) = eval(&model, step, &mut trace, &mut scheduler)?;
            weights = w;
            history.push(rec);
            if rec.valid_accuracy > best_acc {
                best_acc = rec.valid_accuracy;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if config.early_stop.is_some_and(|p| since_best >= p) {
                stopped_early = true;
                break;
            }
        }
    }

    let test = evaluate(&model, &data, &test_windows, head, chunk)?;
    Ok(TrainOutcome { model, stats, trace, history, test, steps_run: step, stopped_early })
}

