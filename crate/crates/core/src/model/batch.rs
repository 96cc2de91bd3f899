use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::signal::{RawEpoch, TfImage, EPOCH_SAMPLES, FREQ_BINS, TIME_FRAMES};
use crate::tensor::Tensor;

/// Borrowed view of one length-L two-view labelled sequence.
#[derive(Clone, Copy, Debug)]
pub struct SequenceView<'a> {
    pub raw: &'a [RawEpoch],
    pub tf: &'a [TfImage],
    pub labels: &'a [u8],
}

/// `B` sequences of `L` epochs laid out for the model.
///
/// Epoch rows are position-major: row `l * B + b` is position `l` of
/// sequence `b`, so one time step of the inter-epoch recurrence is a
/// contiguous block of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub seq_len: usize,
    pub channels: usize,
    /// `[L·B, 3000, C]`.
    pub raw: Tensor,
    /// One `[T·L·B, F]` matrix per channel, row `t · (L·B) + row`.
    pub tf: Vec<Tensor>,
    /// Class index per epoch row.
    pub labels: Vec<usize>,
}

impl SequenceBatch {
    pub fn assemble(sequences: &[SequenceView<'_>]) -> Result<Self> {
        let first = sequences.first().ok_or(Error::Empty("sequence batch"))?;
        let seq_len = first.labels.len();
        let channels = first.raw.first().ok_or(Error::Empty("sequence"))?.channels();
        let batch = sequences.len();
        for s in sequences {
            if s.raw.len() != seq_len || s.tf.len() != seq_len || s.labels.len() != seq_len {
                return Err(Error::Data("sequences in a batch differ in length".into()));
            }
            if s.raw.iter().any(|e| e.channels() != channels) || s.tf.iter().any(|i| i.channels() != channels) {
                return Err(Error::Data("channel counts differ within a batch".into()));
            }
            if let Some(&bad) = s.labels.iter().find(|&&y| y as usize >= super::CLASSES) {
                return Err(Error::Data(format!("label {bad} outside 0..5")));
            }
        }
        let rows = seq_len * batch;
        let mut raw = Vec::with_capacity(rows * EPOCH_SAMPLES * channels);
        let mut labels = Vec::with_capacity(rows);
        for l in 0..seq_len {
            for s in sequences {
                raw.extend_from_slice(s.raw[l].samples());
                labels.push(s.labels[l] as usize);
            }
        }
        let mut tf = vec![vec![0.0; TIME_FRAMES * rows * FREQ_BINS]; channels];
        for l in 0..seq_len {
            for (b, s) in sequences.iter().enumerate() {
                let row = l * batch + b;
                let img = &s.tf[l];
                for (c, plane) in tf.iter_mut().enumerate() {
                    for t in 0..TIME_FRAMES {
                        let base = (t * rows + row) * FREQ_BINS;
                        for f in 0..FREQ_BINS {
                            plane[base + f] = img.get(f, t, c);
                        }
                    }
                }
            }
        }
        Ok(Self {
            batch,
            seq_len,
            channels,
            raw: Tensor::new(vec![rows, EPOCH_SAMPLES, channels], raw)?,
            tf: tf
                .into_iter()
                .map(|p| Tensor::new(vec![TIME_FRAMES * rows, FREQ_BINS], p))
                .collect::<Result<_>>()?,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq_len
    }
}
