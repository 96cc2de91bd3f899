use alloc::vec;
use alloc::vec::Vec;

use super::fft::{fft_in_place, Complex};
use super::{RawEpoch, TfImage, EPOCH_SAMPLES};
use crate::error::{Error, Result};

/// Two-second analysis window at 100 Hz.
pub const WINDOW: usize = 200;
/// 50 % overlap.
pub const HOP: usize = 100;
pub const FFT_SIZE: usize = 256;
pub const FREQ_BINS: usize = FFT_SIZE / 2 + 1;
pub const TIME_FRAMES: usize = (EPOCH_SAMPLES - WINDOW) / HOP + 1;
/// Added to magnitudes before the logarithm.
pub const EPS_LOG: f64 = 1e-12;

/// Number of full frames of `window` samples advanced by `hop`.
pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window {
        0
    } else {
        (samples - window) / hop + 1
    }
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2πn/(N-1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * libm::cos(core::f64::consts::TAU * n as f64 / (len - 1) as f64))
        .collect()
}

/// Log-magnitude one-sided spectrum of one windowed frame (length `FREQ_BINS`).
pub(crate) fn frame_spectrum(frame: &[f64], window: &[f64]) -> Vec<f64> {
    let mut buf = vec![Complex::default(); FFT_SIZE];
    for (b, (x, w)) in buf.iter_mut().zip(frame.iter().zip(window)) {
        b.re = x * w;
    }
    fft_in_place(&mut buf);
    buf[..FREQ_BINS].iter().map(|c| c.norm()).collect()
}

/// Spectrogram of every channel: 200-sample Hamming frames with hop 100,
/// zero-padded to a 256-point FFT, `ln(|X| + EPS_LOG)`.
pub fn stft_log(epoch: &RawEpoch) -> Result<TfImage> {
    let c = epoch.channels();
    if epoch.samples().len() != EPOCH_SAMPLES * c {
        return Err(Error::Data("epoch does not hold 3000 samples per channel".into()));
    }
    let window = hamming(WINDOW);
    let mut values = vec![0.0; FREQ_BINS * TIME_FRAMES * c];
    for ch in 0..c {
        let signal: Vec<f64> = epoch.channel(ch).collect();
        for t in 0..TIME_FRAMES {
            let mags = frame_spectrum(&signal[t * HOP..t * HOP + WINDOW], &window);
            for (f, m) in mags.into_iter().enumerate() {
                values[(f * TIME_FRAMES + t) * c + ch] = libm::log(m + EPS_LOG);
            }
        }
    }
    TfImage::new(values, c)
}
