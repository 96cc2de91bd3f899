//! Raw epochs, log-magnitude spectrograms and their normalization.

mod fft;
mod normalize;
mod stft;

pub use fft::{fft_in_place, Complex};
pub use normalize::{fit_normalization, NormalizationStats, EPS_STD};
pub use stft::{frame_count, hamming, stft_log, EPS_LOG, FFT_SIZE, FREQ_BINS, HOP, TIME_FRAMES, WINDOW};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 100;
pub const EPOCH_SAMPLES: usize = 3000;
pub const MAX_CHANNELS: usize = 3;

/// One 30 s epoch: `3000 × C` samples stored sample-major, channel-minor.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEpoch {
    samples: Vec<f64>,
    channels: usize,
    pub channel_labels: Vec<String>,
}

impl RawEpoch {
    pub fn new(samples: Vec<f64>, channel_labels: Vec<String>) -> Result<Self> {
        let channels = channel_labels.len();
        if !(1..=MAX_CHANNELS).contains(&channels) {
            return Err(Error::Data(format!("{channels} channels, expected 1 to {MAX_CHANNELS}")));
        }
        if samples.len() != EPOCH_SAMPLES * channels {
            return Err(Error::Data(format!(
                "{} samples for {channels} channel(s), expected {}",
                samples.len(),
                EPOCH_SAMPLES * channels
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "raw epoch" });
        }
        Ok(Self { samples, channels, channel_labels })
    }

    /// Epoch with default channel names `ch0`, `ch1`, ...
    pub fn unlabeled(samples: Vec<f64>, channels: usize) -> Result<Self> {
        Self::new(samples, (0..channels).map(|c| format!("ch{c}")).collect())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().skip(c).step_by(self.channels).copied()
    }
}

/// `F × T × C` log-magnitude image, index `(f * T + t) * C + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct TfImage {
    values: Vec<f64>,
    channels: usize,
}

impl TfImage {
    pub fn new(values: Vec<f64>, channels: usize) -> Result<Self> {
        if channels == 0 || values.len() != FREQ_BINS * TIME_FRAMES * channels {
            return Err(Error::Data(format!(
                "{} values do not form a {FREQ_BINS}x{TIME_FRAMES}x{channels} image",
                values.len()
            )));
        }
        Ok(Self { values, channels })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (FREQ_BINS, TIME_FRAMES, self.channels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize, c: usize) -> f64 {
        self.values[(f * TIME_FRAMES + t) * self.channels + c]
    }
}
