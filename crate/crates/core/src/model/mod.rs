//! Two-stream sequence classifier: a convolutional raw-signal stream and a
//! filterbank/attention time-frequency stream, each followed by a
//! bidirectional inter-epoch encoder, with three softmax heads.

mod batch;
mod config;
pub mod layers;
mod params;

use alloc::vec::Vec;

pub use batch::{SequenceBatch, SequenceView};
pub use config::{Dims, ModelConfig, CLASSES};
pub use params::ParamSet;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::signal::{EPOCH_SAMPLES, FREQ_BINS, TIME_FRAMES};
use crate::tensor::{Tape, Tensor, Var};
pub use layers::Dropout;
use layers::{Attention, BiRnn, Conv, Filterbank, Linear};

/// Probability floor inside the log of the cross-entropy.
pub const EPS_LOG: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Layout {
    convs: Vec<Conv>,
    raw_rnn: BiRnn,
    filterbank: Filterbank,
    epoch_rnn: BiRnn,
    attention: Attention,
    tf_rnn: BiRnn,
    head_raw: Linear,
    head_tf: Linear,
    head_joint: Linear,
}

/// Tape handles for one forward pass. Every row-indexed tensor uses the
/// position-major row order of [`SequenceBatch`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `[L·B, raw_feature]`
    pub x1: Var,
    /// `[L·B, 2H]`
    pub x2: Var,
    /// Attention weights `[L·B, T]`.
    pub alpha: Var,
    /// `[L·B, 2H1]`
    pub o1: Var,
    /// `[L·B, 2H2]`
    pub o2: Var,
    pub y1: Var,
    pub y2: Var,
    pub ystar: Var,
}

/// Class probabilities `[rows, 5]` of the three heads.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub y1: Tensor,
    pub y2: Tensor,
    pub ystar: Tensor,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    dims: Dims,
    params: ParamSet,
    layout: Layout,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let dims = config.dims()?;
        let mut rng = Rng::seeded(seed);
        let mut ps = ParamSet::new();
        let c = config.channels;

        let mut convs = Vec::with_capacity(dims.conv_filters.len());
        let mut cin = c;
        for (i, &cout) in dims.conv_filters.iter().enumerate() {
            let name = alloc::format!("raw/conv{i}");
            convs.push(Conv::new(&mut ps, &mut rng, &name, config.conv_width, cin, cout, config.conv_stride));
            cin = cout;
        }
        let raw_rnn = BiRnn::gru(&mut ps, &mut rng, "raw/gru", dims.raw_feature, dims.raw_hidden);

        let filterbank = Filterbank::new(&mut ps, "tf/filterbank", c, dims.filterbank);
        let epoch_rnn = BiRnn::lstm(
            &mut ps,
            &mut rng,
            "tf/epoch_lstm",
            dims.filterbank * c,
            dims.epoch_hidden,
            config.recurrent_norm,
        );
        let attention = Attention::new(&mut ps, &mut rng, "tf/attention", 2 * dims.epoch_hidden, dims.attention);
        let tf_rnn = BiRnn::lstm(
            &mut ps,
            &mut rng,
            "tf/seq_lstm",
            2 * dims.epoch_hidden,
            dims.tf_hidden,
            config.recurrent_norm,
        );

        let (w1, w2) = (2 * dims.raw_hidden, 2 * dims.tf_hidden);
        let head_raw = Linear::new(&mut ps, &mut rng, "head/raw", w1, CLASSES);
        let head_tf = Linear::new(&mut ps, &mut rng, "head/tf", w2, CLASSES);
        let head_joint = Linear::new(&mut ps, &mut rng, "head/joint", w1 + w2, CLASSES);

        let layout = Layout {
            convs,
            raw_rnn,
            filterbank,
            epoch_rnn,
            attention,
            tf_rnn,
            head_raw,
            head_tf,
            head_joint,
        };
        Ok(Self { config, dims, params: ps, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn raw_param_count(&self) -> usize {
        self.params.count_with_prefix("raw/")
    }

    pub fn tf_param_count(&self) -> usize {
        self.params.count_with_prefix("tf/")
    }

    pub fn head_param_count(&self) -> usize {
        self.params.count_with_prefix("head/")
    }

    fn check_batch(&self, batch: &SequenceBatch) -> Result<()> {
        let rows = batch.rows();
        if batch.channels != self.config.channels {
            return Err(Error::Shape {
                op: "model",
                detail: alloc::format!("batch has {} channels, model expects {}", batch.channels, self.config.channels),
            });
        }
        if batch.raw.shape() != [rows, EPOCH_SAMPLES, batch.channels]
            || batch.tf.len() != batch.channels
            || batch.tf.iter().any(|t| t.shape() != [TIME_FRAMES * rows, FREQ_BINS])
            || batch.labels.len() != rows
        {
            return Err(Error::Shape { op: "model", detail: "inconsistent sequence batch".into() });
        }
        Ok(())
    }

    /// Raw-stream epoch features: the conv stack on `raw [N, 3000, C]`,
    /// flattened time-major then channel to `[N, raw_feature]`.
    pub fn feature_map_raw(&self, tape: &mut Tape, p: &[Var], raw: Var, drop: &mut Dropout) -> Result<Var> {
        let n = tape.value(raw).shape()[0];
        let mut h = raw;
        for conv in &self.layout.convs {
            h = conv.forward(tape, p, h, self.config.conv_dropout, drop)?;
        }
        tape.reshape(h, &[n, self.dims.raw_feature])
    }

    /// Time-frequency epoch features from per-channel frames `[T·N, F]`
    /// (row `t·N + n`). Returns `(x2 [N, 2H], α [N, T])`.
    pub fn feature_map_tf(&self, tape: &mut Tape, p: &[Var], tf: &[Var], drop: &mut Dropout) -> Result<(Var, Var)> {
        if tf.len() != self.config.channels {
            return Err(Error::Shape { op: "feature_map_tf", detail: "one frame matrix per channel expected".into() });
        }
        let total = tape.value(tf[0]).shape()[0];
        if total % TIME_FRAMES != 0 {
            return Err(Error::Shape { op: "feature_map_tf", detail: "rows are not a multiple of the frame count".into() });
        }
        let n = total / TIME_FRAMES;
        let s = self.layout.filterbank.forward(tape, p, tf)?;
        let z = self.layout.epoch_rnn.forward(tape, p, s, TIME_FRAMES, n)?;
        let z = z
            .into_iter()
            .map(|zt| drop.apply(tape, zt, self.config.rnn_dropout))
            .collect::<Result<Vec<_>>>()?;
        self.layout.attention.forward(tape, p, &z)
    }

    fn encode(&self, rnn: &BiRnn, tape: &mut Tape, p: &[Var], x: Var, batch: usize, drop: &mut Dropout) -> Result<Var> {
        let rows = tape.value(x).shape()[0];
        if rows == 0 || batch == 0 || rows % batch != 0 {
            return Err(Error::Empty("inter-epoch sequence"));
        }
        let steps = rnn.forward(tape, p, x, rows / batch, batch)?;
        let o = tape.concat_rows(&steps)?;
        drop.apply(tape, o, self.config.rnn_dropout)
    }

    /// Bidirectional GRU over `x1 [L·B, raw_feature]`.
    pub fn encode_raw(&self, tape: &mut Tape, p: &[Var], x1: Var, batch: usize, drop: &mut Dropout) -> Result<Var> {
        self.encode(&self.layout.raw_rnn, tape, p, x1, batch, drop)
    }

    /// Bidirectional LSTM over `x2 [L·B, 2H]`.
    pub fn encode_tf(&self, tape: &mut Tape, p: &[Var], x2: Var, batch: usize, drop: &mut Dropout) -> Result<Var> {
        self.encode(&self.layout.tf_rnn, tape, p, x2, batch, drop)
    }

    pub fn head_raw(&self, tape: &mut Tape, p: &[Var], o1: Var) -> Result<Var> {
        let a = self.layout.head_raw.forward(tape, p, o1)?;
        tape.softmax(a)
    }

    pub fn head_tf(&self, tape: &mut Tape, p: &[Var], o2: Var) -> Result<Var> {
        let a = self.layout.head_tf.forward(tape, p, o2)?;
        tape.softmax(a)
    }

    pub fn head_joint(&self, tape: &mut Tape, p: &[Var], o1: Var, o2: Var) -> Result<Var> {
        let joint = tape.concat_cols(&[o1, o2])?;
        let a = self.layout.head_joint.forward(tape, p, joint)?;
        tape.softmax(a)
    }

    /// The three softmax heads. Returns `(y1, y2, ystar)`.
    pub fn heads_forward(&self, tape: &mut Tape, p: &[Var], o1: Var, o2: Var) -> Result<(Var, Var, Var)> {
        let y1 = self.head_raw(tape, p, o1)?;
        let y2 = self.head_tf(tape, p, o2)?;
        let ystar = self.head_joint(tape, p, o1, o2)?;
        Ok((y1, y2, ystar))
    }

    fn check_params(&self, p: &[Var]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::InvalidArgument("parameter handles do not match the model".into()));
        }
        Ok(())
    }

    /// Raw stream over a batch. Returns `(x1, o1)`.
    pub fn forward_raw(&self, tape: &mut Tape, p: &[Var], batch: &SequenceBatch, drop: &mut Dropout) -> Result<(Var, Var)> {
        self.check_batch(batch)?;
        self.check_params(p)?;
        let raw = tape.constant(batch.raw.clone())?;
        let x1 = self.feature_map_raw(tape, p, raw, drop)?;
        let o1 = self.encode_raw(tape, p, x1, batch.batch, drop)?;
        Ok((x1, o1))
    }

    /// Time-frequency stream over a batch. Returns `(x2, α, o2)`.
    pub fn forward_tf(&self, tape: &mut Tape, p: &[Var], batch: &SequenceBatch, drop: &mut Dropout) -> Result<(Var, Var, Var)> {
        self.check_batch(batch)?;
        self.check_params(p)?;
        let tf = batch.tf.iter().map(|t| tape.constant(t.clone())).collect::<Result<Vec<_>>>()?;
        let (x2, alpha) = self.feature_map_tf(tape, p, &tf, drop)?;
        let o2 = self.encode_tf(tape, p, x2, batch.batch, drop)?;
        Ok((x2, alpha, o2))
    }

    /// Full forward pass. `p` are this model's parameters registered on
    /// `tape` via [`ParamSet::register`]; each stream draws dropout masks
    /// from its own source.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &[Var],
        batch: &SequenceBatch,
        drop_raw: &mut Dropout,
        drop_tf: &mut Dropout,
    ) -> Result<ForwardVars> {
        let (x1, o1) = self.forward_raw(tape, p, batch, drop_raw)?;
        let (x2, alpha, o2) = self.forward_tf(tape, p, batch, drop_tf)?;
        let (y1, y2, ystar) = self.heads_forward(tape, p, o1, o2)?;
        Ok(ForwardVars { x1, x2, alpha, o1, o2, y1, y2, ystar })
    }

    /// Evaluation-mode forward pass returning the head probabilities.
    pub fn predict(&self, batch: &SequenceBatch) -> Result<HeadOutputs> {
        let mut tape = Tape::new();
        let p = self.params.register(&mut tape, false)?;
        let f = self.forward(&mut tape, &p, batch, &mut Dropout::off(), &mut Dropout::off())?;
        Ok(HeadOutputs {
            y1: tape.value(f.y1).clone(),
            y2: tape.value(f.y2).clone(),
            ystar: tape.value(f.ystar).clone(),
        })
    }
}

/// Per-branch mean cross-entropy `(ℒ1, ℒ2, ℒ*)` against class indices.
pub fn branch_losses(tape: &mut Tape, f: &ForwardVars, labels: &[usize]) -> Result<[Var; 3]> {
    Ok([
        tape.nll(f.y1, labels, EPS_LOG)?,
        tape.nll(f.y2, labels, EPS_LOG)?,
        tape.nll(f.ystar, labels, EPS_LOG)?,
    ])
}

/// Mean cross-entropy of probability rows `[m, 5]` against class indices.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone())?;
    let l = tape.nll(p, labels, EPS_LOG)?;
    Ok(tape.value(l).data()[0])
}

/// Renormalized mean of the three heads.
pub fn self_ensemble(heads: &HeadOutputs) -> Result<Tensor> {
    let (a, b, c) = (&heads.y1, &heads.y2, &heads.ystar);
    if a.shape() != b.shape() || a.shape() != c.shape() || a.last_dim() != CLASSES {
        return Err(Error::Shape { op: "self_ensemble", detail: "head shapes differ".into() });
    }
    let mut out: Vec<f64> = a.data().iter().zip(b.data()).zip(c.data()).map(|((x, y), z)| (x + y + z) / 3.0).collect();
    for row in out.chunks_mut(CLASSES) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Tensor::new(a.shape().to_vec(), out)
}
