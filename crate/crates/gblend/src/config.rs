//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. `preset` selects the
//! base experiment (`asymmetric_overfit` or `small_data`) and is applied
//! before every other key, whatever its position; `seed` sets both the
//! training and the data seed unless `data_seed` is also given. Unknown
//! keys are errors.
//!
//! | group | keys |
//! |-------|------|
//! | run | `mode`, `seed`, `steps`, `batch_size`, `eval_every`, `window`, `train_subset`, `early_stop` (`none` or a count), `self_ensemble`, `pinned_weights` (`none` or `a,b,c`) |
//! | optimizer | `lr`, `beta1`, `beta2`, `adam_eps` |
//! | model | `channels`, `seq_len`, `conv_filters` (comma list), `conv_width`, `conv_stride`, `filterbank`, `epoch_hidden`, `attention`, `raw_hidden`, `tf_hidden`, `scale`, `recurrent_norm`, `conv_dropout`, `rnn_dropout` |
//! | data | `data_dir`, `data_seed`, `n_subjects`, `epochs_per_subject`, `stay`, `sigma1`, `sigma2`, `nuisance_dim`, `nuisance_amplitude`, `gain_jitter`, `n_train`, `n_valid` |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use gblend_core::blend::BlendWeights;
use gblend_core::model::{ModelConfig, CLASSES};
use gblend_core::presets::Experiment;
use gblend_core::train::{Mode, TrainConfig};

use crate::error::{GblendError, Result};

pub const PRESETS: [&str; 2] = ["asymmetric_overfit", "small_data"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub experiment: Experiment,
    /// Directory written by `gen-data`; synthetic data is generated in
    /// memory when unset.
    pub data_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        let experiment = match name {
            "asymmetric_overfit" => Experiment::asymmetric_overfit(seed),
            "small_data" => Experiment::small_data(seed),
            _ => return None,
        };
        Some(Self { preset: name.to_string(), experiment, data_dir: None })
    }

    pub fn train(&self) -> &TrainConfig {
        &self.experiment.train
    }

    /// Sets the training and data seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.experiment.train.seed = seed;
        self.experiment.spec.seed = seed;
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(i + 1, format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if entries.iter().any(|(_, key, _): &(usize, &str, &str)| *key == k) {
                return Err(cfg_err(i + 1, format!("duplicate key {k:?}")));
            }
            entries.push((i + 1, k, v));
        }
        let preset = entries.iter().find(|e| e.1 == "preset").map_or("asymmetric_overfit", |e| e.2);
        let mut cfg = Self::preset(preset, 0).ok_or_else(|| {
            let line = entries.iter().find(|e| e.1 == "preset").map_or(0, |e| e.0);
            cfg_err(line, format!("unknown preset {preset:?}, expected one of {PRESETS:?}"))
        })?;
        if let Some(&(line, _, v)) = entries.iter().find(|e| e.1 == "seed") {
            cfg.set_seed(value(line, "seed", v)?);
        }
        for &(line, k, v) in &entries {
            if k != "preset" && k != "seed" {
                cfg.apply(line, k, v)?;
            }
        }
        cfg.experiment.train.validate()?;
        cfg.experiment.spec.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, k: &str, v: &str) -> Result<()> {
        let t = &mut self.experiment.train;
        let s = &mut self.experiment.spec;
        match k {
            "mode" => t.mode = Mode::from_name(v).ok_or_else(|| cfg_err(line, format!("unknown mode {v:?}")))?,
            "steps" => t.steps = value(line, k, v)?,
            "batch_size" => t.batch_size = value(line, k, v)?,
            "eval_every" => t.eval_every = value(line, k, v)?,
            "window" => t.window = value(line, k, v)?,
            "train_subset" => t.train_subset = value(line, k, v)?,
            "early_stop" => t.early_stop = if v == "none" { None } else { Some(value(line, k, v)?) },
            "self_ensemble" => t.self_ensemble = value(line, k, v)?,
            "pinned_weights" => {
                t.pinned_weights = if v == "none" {
                    None
                } else {
                    let w: Vec<f64> = list(line, k, v)?;
                    let w: [f64; 3] = w.try_into().map_err(|_| cfg_err(line, "pinned_weights takes three values"))?;
                    Some(BlendWeights(w))
                }
            }
            "lr" => t.adam.lr = value(line, k, v)?,
            "beta1" => t.adam.beta1 = value(line, k, v)?,
            "beta2" => t.adam.beta2 = value(line, k, v)?,
            "adam_eps" => t.adam.eps = value(line, k, v)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            "data_seed" => s.seed = value(line, k, v)?,
            "n_subjects" => s.n_subjects = value(line, k, v)?,
            "epochs_per_subject" => s.epochs_per_subject = value(line, k, v)?,
            "stay" => {
                let p: f64 = value(line, k, v)?;
                for (i, row) in s.transition.iter_mut().enumerate() {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = if i == j { p } else { (1.0 - p) / (CLASSES - 1) as f64 };
                    }
                }
            }
            "sigma1" => s.sigma1 = value(line, k, v)?,
            "sigma2" => s.sigma2 = value(line, k, v)?,
            "nuisance_dim" => s.nuisance_dim = value(line, k, v)?,
            "nuisance_amplitude" => s.nuisance_amplitude = value(line, k, v)?,
            "gain_jitter" => s.gain_jitter = value(line, k, v)?,
            "n_train" => self.experiment.n_train = value(line, k, v)?,
            "n_valid" => self.experiment.n_valid = value(line, k, v)?,
            _ => return apply_model(&mut self.experiment.train.model, line, k, v),
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn render(&self) -> String {
        let t = self.train();
        let s = &self.experiment.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("preset", self.preset.clone());
        kv("seed", t.seed.to_string());
        kv("mode", t.mode.name().to_string());
        kv("steps", t.steps.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("eval_every", t.eval_every.to_string());
        kv("window", t.window.to_string());
        kv("train_subset", t.train_subset.to_string());
        kv("early_stop", t.early_stop.map_or("none".into(), |p| p.to_string()));
        kv("self_ensemble", t.self_ensemble.to_string());
        kv("pinned_weights", t.pinned_weights.map_or("none".into(), |w| join(&w.0)));
        kv("lr", t.adam.lr.to_string());
        kv("beta1", t.adam.beta1.to_string());
        kv("beta2", t.adam.beta2.to_string());
        kv("adam_eps", t.adam.eps.to_string());
        if let Some(d) = &self.data_dir {
            kv("data_dir", d.display().to_string());
        }
        kv("data_seed", s.seed.to_string());
        kv("n_subjects", s.n_subjects.to_string());
        kv("epochs_per_subject", s.epochs_per_subject.to_string());
        kv("stay", s.transition[0][0].to_string());
        kv("sigma1", s.sigma1.to_string());
        kv("sigma2", s.sigma2.to_string());
        kv("nuisance_dim", s.nuisance_dim.to_string());
        kv("nuisance_amplitude", s.nuisance_amplitude.to_string());
        kv("gain_jitter", s.gain_jitter.to_string());
        kv("n_train", self.experiment.n_train.to_string());
        kv("n_valid", self.experiment.n_valid.to_string());
        out.push_str(&render_model(&t.model));
        out
    }
}

fn cfg_err(line: usize, msg: impl Into<String>) -> GblendError {
    GblendError::Config { line, msg: msg.into() }
}

fn value<T: FromStr>(line: usize, k: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(line, format!("invalid value {v:?} for {k}")))
}

fn list<T: FromStr>(line: usize, k: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| value(line, k, x.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Applies one model key; shared with the checkpoint config block.
pub(crate) fn apply_model(m: &mut ModelConfig, line: usize, k: &str, v: &str) -> Result<()> {
    match k {
        "channels" => m.channels = value(line, k, v)?,
        "seq_len" => m.seq_len = value(line, k, v)?,
        "conv_filters" => m.conv_filters = list(line, k, v)?,
        "conv_width" => m.conv_width = value(line, k, v)?,
        "conv_stride" => m.conv_stride = value(line, k, v)?,
        "filterbank" => m.filterbank = value(line, k, v)?,
        "epoch_hidden" => m.epoch_hidden = value(line, k, v)?,
        "attention" => m.attention = value(line, k, v)?,
        "raw_hidden" => m.raw_hidden = value(line, k, v)?,
        "tf_hidden" => m.tf_hidden = value(line, k, v)?,
        "scale" => m.scale = value(line, k, v)?,
        "recurrent_norm" => m.recurrent_norm = value(line, k, v)?,
        "conv_dropout" => m.conv_dropout = value(line, k, v)?,
        "rnn_dropout" => m.rnn_dropout = value(line, k, v)?,
        _ => return Err(cfg_err(line, format!("unknown key {k:?}"))),
    }
    Ok(())
}

pub(crate) fn render_model(m: &ModelConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
    kv("channels", m.channels.to_string());
    kv("seq_len", m.seq_len.to_string());
    kv("conv_filters", join(&m.conv_filters));
    kv("conv_width", m.conv_width.to_string());
    kv("conv_stride", m.conv_stride.to_string());
    kv("filterbank", m.filterbank.to_string());
    kv("epoch_hidden", m.epoch_hidden.to_string());
    kv("attention", m.attention.to_string());
    kv("raw_hidden", m.raw_hidden.to_string());
    kv("tf_hidden", m.tf_hidden.to_string());
    kv("scale", m.scale.to_string());
    kv("recurrent_norm", m.recurrent_norm.to_string());
    kv("conv_dropout", m.conv_dropout.to_string());
    kv("rnn_dropout", m.rnn_dropout.to_string());
    out
}

pub(crate) fn parse_model(text: &str) -> Result<ModelConfig> {
    let mut m = ModelConfig::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(i + 1, "expected key = value"))?;
        apply_model(&mut m, i + 1, k.trim(), v.trim())?;
    }
    m.validate()?;
    Ok(m)
}
