use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::signal::{EPOCH_SAMPLES, MAX_CHANNELS};
use crate::tensor::Padding;

/// Number of sleep stages (W, N1, N2, N3, REM).
pub const CLASSES: usize = 5;

/// Architecture hyperparameters. Sizes are nominal; [`ModelConfig::dims`]
/// applies `scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub seq_len: usize,
    pub conv_filters: Vec<usize>,
    pub conv_width: usize,
    pub conv_stride: usize,
    /// Filterbank size D.
    pub filterbank: usize,
    /// Intra-epoch LSTM hidden size H.
    pub epoch_hidden: usize,
    /// Attention size A.
    pub attention: usize,
    /// Raw-stream inter-epoch GRU hidden size H1.
    pub raw_hidden: usize,
    /// Time-frequency-stream inter-epoch LSTM hidden size H2.
    pub tf_hidden: usize,
    /// Multiplier on every size above (results floored at 1).
    pub scale: f64,
    /// Layer normalization of the LSTM gate pre-activations.
    pub recurrent_norm: bool,
    pub conv_dropout: f64,
    pub rnn_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            seq_len: 20,
            conv_filters: vec![16, 16, 32, 32, 64, 64, 128, 128, 256],
            conv_width: 31,
            conv_stride: 2,
            filterbank: 32,
            epoch_hidden: 64,
            attention: 64,
            raw_hidden: 256,
            tf_hidden: 64,
            scale: 1.0,
            recurrent_norm: true,
            conv_dropout: 0.5,
            rnn_dropout: 0.25,
        }
    }
}

/// Concrete layer sizes after scaling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dims {
    pub conv_filters: Vec<usize>,
    /// Temporal length after each conv layer.
    pub conv_lengths: Vec<usize>,
    pub filterbank: usize,
    pub epoch_hidden: usize,
    pub attention: usize,
    pub raw_hidden: usize,
    pub tf_hidden: usize,
    /// Width of the flattened raw-stream epoch feature.
    pub raw_feature: usize,
}

fn scaled(size: usize, scale: f64) -> usize {
    (libm::round(size as f64 * scale) as usize).max(1)
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("model config: {m}")));
        if !(1..=MAX_CHANNELS).contains(&self.channels) {
            return bad("channels must be 1, 2 or 3");
        }
        if self.seq_len == 0 {
            return bad("seq_len must be at least 1");
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("conv_filters must be a non-empty list of positive sizes");
        }
        if self.conv_width == 0 || self.conv_stride == 0 {
            return bad("conv width and stride must be positive");
        }
        let sizes = [self.filterbank, self.epoch_hidden, self.attention, self.raw_hidden, self.tf_hidden];
        if sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad("scale must be positive");
        }
        for r in [self.conv_dropout, self.rnn_dropout] {
            if !(0.0..1.0).contains(&r) {
                return bad("dropout rates must lie in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Result<Dims> {
        self.validate()?;
        let conv_filters: Vec<usize> = self.conv_filters.iter().map(|&f| scaled(f, self.scale)).collect();
        let mut len = EPOCH_SAMPLES;
        let mut conv_lengths = Vec::with_capacity(conv_filters.len());
        for _ in &conv_filters {
            len = Padding::Same
                .output_len(len, self.conv_width, self.conv_stride)
                .ok_or_else(|| Error::InvalidArgument("conv stack collapses the signal".into()))?
                .0;
            conv_lengths.push(len);
        }
        let raw_feature = len * conv_filters[conv_filters.len() - 1];
        Ok(Dims {
            raw_feature,
            conv_filters,
            conv_lengths,
            filterbank: scaled(self.filterbank, self.scale),
            epoch_hidden: scaled(self.epoch_hidden, self.scale),
            attention: scaled(self.attention, self.scale),
            raw_hidden: scaled(self.raw_hidden, self.scale),
            tf_hidden: scaled(self.tf_hidden, self.scale),
        })
    }
}
