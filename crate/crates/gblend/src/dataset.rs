//! Dataset directories.
//!
//! `gen-data` writes `subject_NNN.view1.gbs` (burst waveform) and
//! `subject_NNN.view2.gbs` (spectral-source waveform) per subject, both in
//! the raw-signal format. `preprocess` adds `subject_NNN.tf.gbtf` and
//! `stats.gbns`, the latter fitted over every subject in the directory.

use std::fs;
use std::path::{Path, PathBuf};

use gblend_core::signal::{fit_normalization, stft_log, TfImage};
use gblend_core::synth::Subject;
use gblend_core::train::PreparedSubject;

use crate::error::{format_err, io_err, Result};
use crate::formats::{load_raw_signals, load_tf_images, write_raw_signals, write_stats, write_tf_images, RawSignals};

pub const STATS_FILE: &str = "stats.gbns";

pub fn view_path(dir: &Path, subject: usize, view: u8) -> PathBuf {
    dir.join(format!("subject_{subject:03}.view{view}.gbs"))
}

pub fn tf_path(dir: &Path, subject: usize) -> PathBuf {
    dir.join(format!("subject_{subject:03}.tf.gbtf"))
}

pub fn write_dataset(dir: &Path, subjects: &[Subject]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, s) in subjects.iter().enumerate() {
        write_raw_signals(&view_path(dir, i, 1), &RawSignals { epochs: s.raw.clone(), labels: s.labels.clone() })?;
        write_raw_signals(&view_path(dir, i, 2), &RawSignals { epochs: s.spectral.clone(), labels: s.labels.clone() })?;
    }
    Ok(())
}

/// Number of consecutive subjects present, counting from 0.
pub fn subject_count(dir: &Path) -> Result<usize> {
    if !dir.is_dir() {
        return Err(format_err(dir.display().to_string(), "not a dataset directory"));
    }
    let n = (0..).take_while(|&i| view_path(dir, i, 1).is_file()).count();
    if n == 0 {
        return Err(format_err(dir.display().to_string(), "contains no subject_000.view1.gbs"));
    }
    Ok(n)
}

fn spectral_images(dir: &Path, subject: usize, labels: &[u8]) -> Result<Vec<TfImage>> {
    let tf = tf_path(dir, subject);
    if tf.is_file() {
        return load_tf_images(&tf);
    }
    let path = view_path(dir, subject, 2);
    let v2 = load_raw_signals(&path)?;
    if v2.labels != labels {
        return Err(format_err(path.display().to_string(), "labels differ from view 1"));
    }
    Ok(v2.epochs.iter().map(stft_log).collect::<gblend_core::Result<_>>()?)
}

/// Loads every subject, using precomputed images when present.
pub fn load_dataset(dir: &Path) -> Result<Vec<PreparedSubject>> {
    (0..subject_count(dir)?)
        .map(|i| {
            let v1 = load_raw_signals(&view_path(dir, i, 1))?;
            let tf = spectral_images(dir, i, &v1.labels)?;
            if tf.len() != v1.labels.len() {
                return Err(format_err(tf_path(dir, i).display().to_string(), "image count differs from the epoch count"));
            }
            Ok(PreparedSubject { labels: v1.labels, raw: v1.epochs, tf })
        })
        .collect()
}

/// Writes time-frequency images and corpus statistics for every subject in
/// `data` into `out`. Returns the number of subjects.
pub fn preprocess(data: &Path, out: &Path) -> Result<usize> {
    let n = subject_count(data)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut corpus = Vec::new();
    for i in 0..n {
        let path = view_path(data, i, 2);
        let v2 = load_raw_signals(&path)?;
        let images = v2.epochs.iter().map(stft_log).collect::<gblend_core::Result<Vec<_>>>()?;
        write_tf_images(&tf_path(out, i), &images)?;
        corpus.extend(images);
    }
    write_stats(&out.join(STATS_FILE), &fit_normalization(&corpus)?)?;
    Ok(n)
}
