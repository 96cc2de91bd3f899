//! Multi-view sequence-to-sequence sleep staging with adaptive gradient
//! blending, written against `core` + `alloc` only.
//!
//! The crate holds the numeric pieces: a small reverse-mode autodiff engine,
//! spectrogram preprocessing, the two-stream model, the loss-weight
//! schedulers, metrics, a synthetic data generator and the training loop.
//! File formats and the command-line tool live in the `gblend` crate.

#![no_std]

extern crate alloc;

pub mod blend;
pub mod error;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
