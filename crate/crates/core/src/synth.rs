//! Synthetic two-view sleep recordings.
//!
//! View 1 is a waveform carrying stage-specific transient bursts at random
//! positions, plus subject-specific nuisance components. View 2 is a
//! separate waveform whose band energies depend on the stage; it becomes a
//! spectrogram through [`stft_log`](crate::signal::stft_log). Given the
//! stage, the two views are drawn independently.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::model::CLASSES;
use crate::rng::Rng;
use crate::signal::{RawEpoch, EPOCH_SAMPLES, MAX_CHANNELS, SAMPLE_RATE};

/// Stage signature in the burst view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurstProfile {
    /// Bursts per epoch.
    pub count: usize,
    /// Carrier frequency in Hz.
    pub freq: f64,
    pub amplitude: f64,
    /// Gaussian envelope standard deviation in seconds.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub epochs_per_subject: usize,
    pub seed: u64,
    pub channels: usize,
    pub class_prior: [f64; CLASSES],
    /// Row-stochastic stage transition matrix.
    pub transition: [[f64; CLASSES]; CLASSES],
    pub bursts: [BurstProfile; CLASSES],
    /// Band edges in Hz for the spectral view, `bands.len() = B`.
    pub bands: Vec<(f64, f64)>,
    /// Amplitude of each band per stage, `[stage][band]`.
    pub band_amplitude: [Vec<f64>; CLASSES],
    /// Sinusoids drawn per band and epoch.
    pub tones_per_band: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Number of subject-specific nuisance waveforms in view 1.
    pub nuisance_dim: usize,
    pub nuisance_amplitude: f64,
    /// Log-normal spread of per-epoch amplitude gains in both views.
    pub gain_jitter: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let stay = 0.9;
        let mut transition = [[0.0; CLASSES]; CLASSES];
        for (i, row) in transition.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { stay } else { (1.0 - stay) / (CLASSES - 1) as f64 };
            }
        }
        let burst = |count, freq, amplitude| BurstProfile { count, freq, amplitude, width: 0.25 };
        Self {
            n_subjects: 40,
            epochs_per_subject: 60,
            seed: 0,
            channels: 1,
            class_prior: [0.2; CLASSES],
            transition,
            bursts: [burst(1, 9.0, 1.0), burst(2, 5.0, 1.0), burst(3, 13.0, 1.5), burst(4, 1.5, 2.0), burst(2, 7.0, 1.0)],
            bands: vec![(0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 20.0), (20.0, 40.0)],
            band_amplitude: [
                vec![0.3, 0.3, 1.5, 0.8, 1.0],
                vec![0.5, 1.2, 0.4, 0.4, 0.5],
                vec![0.8, 0.7, 0.6, 0.9, 0.3],
                vec![2.0, 0.5, 0.3, 0.2, 0.1],
                vec![0.6, 1.0, 0.5, 0.5, 0.9],
            ],
            tones_per_band: 2,
            sigma1: 0.5,
            sigma2: 0.5,
            nuisance_dim: 0,
            nuisance_amplitude: 0.0,
            gain_jitter: 0.0,
        }
    }
}

/// One synthetic recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub labels: Vec<u8>,
    /// View 1 epochs.
    pub raw: Vec<RawEpoch>,
    /// View 2 source waveforms, one per epoch.
    pub spectral: Vec<RawEpoch>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || libm::fabs(p.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(Error::InvalidArgument(format!("{what} must be a probability vector")));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        check_distribution(&self.class_prior, "class prior")?;
        for row in &self.transition {
            check_distribution(row, "transition row")?;
        }
        if self.n_subjects == 0 || self.epochs_per_subject == 0 {
            return bad("needs at least one subject and one epoch");
        }
        if !(1..=MAX_CHANNELS).contains(&self.channels) {
            return bad("channels must be 1, 2 or 3");
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if self.bands.is_empty() || self.bands.iter().any(|&(lo, hi)| !(0.0 <= lo && lo < hi && hi <= nyquist)) {
            return bad("bands must be non-empty ranges below the Nyquist frequency");
        }
        if self.band_amplitude.iter().any(|a| a.len() != self.bands.len() || a.iter().any(|v| !(v.is_finite() && *v >= 0.0))) {
            return bad("band amplitudes must be non-negative, one per band and stage");
        }
        if self.bursts.iter().any(|b| !(b.freq > 0.0 && b.freq < nyquist && b.width > 0.0 && b.amplitude >= 0.0)) {
            return bad("burst profiles need positive frequency and width");
        }
        let noise = [self.sigma1, self.sigma2, self.nuisance_amplitude, self.gain_jitter];
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise levels must be non-negative");
        }
        if self.tones_per_band == 0 {
            return bad("tones_per_band must be positive");
        }
        Ok(())
    }

    /// Stage sequences only, one per subject, from the same streams
    /// [`generate_synthetic`] uses.
    pub fn sample_hypnograms(&self) -> Result<Vec<Vec<u8>>> {
        self.validate()?;
        let mut root = Rng::seeded(self.seed);
        Ok((0..self.n_subjects).map(|s| self.hypnogram(&mut subject_rng(&mut root, s).0)).collect())
    }

    fn hypnogram(&self, rng: &mut Rng) -> Vec<u8> {
        let mut labels = Vec::with_capacity(self.epochs_per_subject);
        let mut stage = rng.categorical(&self.class_prior);
        labels.push(stage as u8);
        for _ in 1..self.epochs_per_subject {
            stage = rng.categorical(&self.transition[stage]);
            labels.push(stage as u8);
        }
        labels
    }
}

/// Label, view-1 and view-2 streams of subject `s`.
fn subject_rng(root: &mut Rng, s: usize) -> (Rng, Rng, Rng) {
    let mut base = root.fork(s as u64);
    (base.fork(1), base.fork(2), base.fork(3))
}

fn gain(rng: &mut Rng, jitter: f64) -> f64 {
    if jitter == 0.0 {
        1.0
    } else {
        libm::exp(jitter * rng.normal())
    }
}

fn smooth_template(rng: &mut Rng) -> Vec<f64> {
    // a few low-frequency sinusoids with random phases, unit RMS
    let mut t = vec![0.0; EPOCH_SAMPLES];
    for _ in 0..4 {
        let f = rng.uniform_range(0.3, 20.0);
        let ph = rng.uniform_range(0.0, TAU);
        let a = rng.normal();
        for (i, v) in t.iter_mut().enumerate() {
            *v += a * libm::sin(TAU * f * i as f64 / SAMPLE_RATE as f64 + ph);
        }
    }
    let rms = libm::sqrt(t.iter().map(|v| v * v).sum::<f64>() / EPOCH_SAMPLES as f64).max(1e-12);
    t.iter_mut().for_each(|v| *v /= rms);
    t
}

/// Gaussian-windowed sinusoid added at sample `centre`.
pub fn add_burst(out: &mut [f64], stride: usize, offset: usize, b: &BurstProfile, centre: f64, amplitude: f64) {
    let fs = SAMPLE_RATE as f64;
    let half = (4.0 * b.width * fs) as isize;
    let c = libm::round(centre) as isize;
    for d in -half..=half {
        let i = c + d;
        if i < 0 || i as usize >= EPOCH_SAMPLES {
            continue;
        }
        let t = d as f64 / fs;
        let env = libm::exp(-0.5 * (t / b.width) * (t / b.width));
        out[i as usize * stride + offset] += amplitude * env * libm::cos(TAU * b.freq * t);
    }
}

fn burst_epoch(spec: &SyntheticSpec, rng: &mut Rng, stage: usize, nuisance: &[Vec<f64>]) -> Result<RawEpoch> {
    let c = spec.channels;
    let mut x = vec![0.0; EPOCH_SAMPLES * c];
    let b = &spec.bursts[stage];
    let margin = 4.0 * b.width * SAMPLE_RATE as f64;
    for ch in 0..c {
        let g = gain(rng, spec.gain_jitter);
        for _ in 0..b.count {
            let centre = rng.uniform_range(margin, EPOCH_SAMPLES as f64 - 1.0 - margin);
            add_burst(&mut x, c, ch, b, centre, g * b.amplitude);
        }
        for tpl in nuisance {
            let a = spec.nuisance_amplitude * rng.normal();
            for (i, t) in tpl.iter().enumerate() {
                x[i * c + ch] += a * t;
            }
        }
        if spec.sigma1 > 0.0 {
            for i in 0..EPOCH_SAMPLES {
                x[i * c + ch] += spec.sigma1 * rng.normal();
            }
        }
    }
    RawEpoch::unlabeled(x, c)
}

fn spectral_epoch(spec: &SyntheticSpec, rng: &mut Rng, stage: usize) -> Result<RawEpoch> {
    let c = spec.channels;
    let fs = SAMPLE_RATE as f64;
    let mut x = vec![0.0; EPOCH_SAMPLES * c];
    for ch in 0..c {
        let g = gain(rng, spec.gain_jitter);
        for (&(lo, hi), &amp) in spec.bands.iter().zip(&spec.band_amplitude[stage]) {
            let a = g * amp * libm::sqrt(2.0 / spec.tones_per_band as f64);
            for _ in 0..spec.tones_per_band {
                let f = rng.uniform_range(lo, hi);
                let ph = rng.uniform_range(0.0, TAU);
                let step = TAU * f / fs;
                for i in 0..EPOCH_SAMPLES {
                    x[i * c + ch] += a * libm::sin(step * i as f64 + ph);
                }
            }
        }
        if spec.sigma2 > 0.0 {
            for i in 0..EPOCH_SAMPLES {
                x[i * c + ch] += spec.sigma2 * rng.normal();
            }
        }
    }
    RawEpoch::unlabeled(x, c)
}

/// Generates every subject of `spec`. Pure in `spec` (including its seed).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Subject>> {
    spec.validate()?;
    let mut root = Rng::seeded(spec.seed);
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for s in 0..spec.n_subjects {
        let (mut lr, mut r1, mut r2) = subject_rng(&mut root, s);
        let labels = spec.hypnogram(&mut lr);
        let nuisance: Vec<Vec<f64>> = (0..spec.nuisance_dim).map(|_| smooth_template(&mut r1)).collect();
        let mut raw = Vec::with_capacity(labels.len());
        let mut spectral = Vec::with_capacity(labels.len());
        for &y in &labels {
            raw.push(burst_epoch(spec, &mut r1, y as usize, &nuisance)?);
            spectral.push(spectral_epoch(spec, &mut r2, y as usize)?);
        }
        subjects.push(Subject { labels, raw, spectral });
    }
    Ok(subjects)
}
