//! Desk-scale experiment presets.
//!
//! In both synthetic presets view 1 separates N2 and N3 but confuses W, N1
//! and REM, while view 2 does the opposite.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::ModelConfig;
use crate::synth::{generate_synthetic, BurstProfile, SyntheticSpec};
use crate::tensor::AdamConfig;
use crate::train::{prepare, train, Mode, PreparedSubject, Split, TrainConfig, TrainOutcome};

fn two_view_spec(n_subjects: usize, seed: u64) -> SyntheticSpec {
    let burst = |count, freq, amplitude| BurstProfile { count, freq, amplitude, width: 0.25 };
    let shared = burst(2, 7.0, 0.5);
    SyntheticSpec {
        n_subjects,
        epochs_per_subject: 40,
        seed,
        bursts: [shared, shared, burst(3, 13.0, 3.0), burst(4, 1.5, 4.5), shared],
        band_amplitude: [
            vec![0.8, 0.4, 1.6, 0.4, 0.3],
            vec![0.8, 1.4, 0.4, 0.4, 0.3],
            vec![1.0, 0.6, 0.5, 0.5, 0.3],
            vec![1.0, 0.6, 0.5, 0.5, 0.3],
            vec![0.8, 0.9, 0.4, 1.0, 0.8],
        ],
        sigma1: 0.3,
        sigma2: 1.0,
        nuisance_dim: 16,
        nuisance_amplitude: 0.3,
        gain_jitter: 0.2,
        ..SyntheticSpec::default()
    }
}

/// Synthetic data, split sizes and training settings of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub spec: SyntheticSpec,
    pub n_train: usize,
    pub n_valid: usize,
    pub train: TrainConfig,
}

impl Experiment {
    /// 28 subjects split 20/4/4.
    pub fn asymmetric_overfit(seed: u64) -> Self {
        Self { spec: two_view_spec(28, seed), n_train: 20, n_valid: 4, train: desk_train(seed) }
    }

    /// 20 subjects split 12/4/4.
    pub fn small_data(seed: u64) -> Self {
        Self { spec: two_view_spec(20, seed), n_train: 12, n_valid: 4, train: desk_train(seed) }
    }

    pub fn data(&self) -> Result<Vec<PreparedSubject>> {
        prepare(&generate_synthetic(&self.spec)?)
    }

    pub fn split(&self) -> Result<Split> {
        let n = self.spec.n_subjects;
        let test = n.saturating_sub(self.n_train + self.n_valid);
        Split::random(n, self.n_train, self.n_valid, test, self.spec.seed)
    }

    pub fn config(&self, mode: Mode) -> TrainConfig {
        TrainConfig { mode, ..self.train.clone() }
    }

    /// Trains `mode` on freshly generated data.
    pub fn run(&self, mode: Mode) -> Result<TrainOutcome> {
        let data = self.data()?;
        train(&self.config(mode), &data, &self.split()?)
    }
}

pub fn desk_model() -> ModelConfig {
    ModelConfig { seq_len: 5, scale: 0.125, conv_dropout: 0.1, rnn_dropout: 0.25, ..ModelConfig::default() }
}

pub fn desk_train(seed: u64) -> TrainConfig {
    TrainConfig {
        model: desk_model(),
        batch_size: 8,
        steps: 240,
        eval_every: 4,
        window: 20,
        train_subset: 0.25,
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        seed,
        ..TrainConfig::default()
    }
}
