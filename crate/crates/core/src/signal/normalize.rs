use alloc::vec;
use alloc::vec::Vec;

use super::{TfImage, FREQ_BINS, TIME_FRAMES};
use crate::error::{Error, Result};

/// Floor applied to per-bin standard deviations.
pub const EPS_STD: f64 = 1e-8;

/// Per-(frequency, channel) mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub channels: usize,
    /// Indexed `f * channels + c`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits statistics over every frame of every image. Uses Welford updates,
/// so a constant bin yields its exact value as mean and zero variance.
pub fn fit_normalization(corpus: &[TfImage]) -> Result<NormalizationStats> {
    let first = corpus.first().ok_or(Error::Empty("normalization corpus"))?;
    let c = first.channels();
    if corpus.iter().any(|img| img.channels() != c) {
        return Err(Error::Data("images in the corpus have different channel counts".into()));
    }
    let mut count = 0u64;
    let mut mean = vec![0.0; FREQ_BINS * c];
    let mut m2 = vec![0.0; FREQ_BINS * c];
    for img in corpus {
        for t in 0..TIME_FRAMES {
            count += 1;
            let k = count as f64;
            for f in 0..FREQ_BINS {
                for ch in 0..c {
                    let i = f * c + ch;
                    let x = img.get(f, t, ch);
                    let delta = x - mean[i];
                    mean[i] += delta / k;
                    m2[i] += delta * (x - mean[i]);
                }
            }
        }
    }
    let std = m2.iter().map(|&s| libm::sqrt(s / count as f64).max(EPS_STD)).collect();
    Ok(NormalizationStats { channels: c, mean, std })
}

impl NormalizationStats {
    fn check(&self, img: &TfImage) -> Result<()> {
        if img.channels() != self.channels {
            return Err(Error::Data("image channel count differs from the fitted statistics".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, img: &TfImage) -> Result<TfImage> {
        self.check(img)?;
        self.map(img, |x, m, s| (x - m) / s)
    }

    pub fn unnormalize(&self, img: &TfImage) -> Result<TfImage> {
        self.check(img)?;
        self.map(img, |x, m, s| x * s + m)
    }

    fn map(&self, img: &TfImage, f: impl Fn(f64, f64, f64) -> f64) -> Result<TfImage> {
        let c = self.channels;
        let values: Vec<f64> = img
            .values()
            .iter()
            .enumerate()
            .map(|(idx, &x)| {
                let ch = idx % c;
                let freq = idx / (c * TIME_FRAMES);
                let i = freq * c + ch;
                f(x, self.mean[i], self.std[i])
            })
            .collect();
        TfImage::new(values, c)
    }
}
