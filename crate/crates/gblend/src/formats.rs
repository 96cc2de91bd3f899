//! Binary data files. Each starts with one ASCII header line terminated by
//! `\n`, followed by a little-endian payload.
//!
//! | file | header | payload |
//! |------|--------|---------|
//! | raw signals | `GBLEND1 <n_epochs> <n_channels> <sample_rate>` | `n_epochs·3000·n_channels` f32 samples (epoch, then sample, then channel), then `n_epochs` label bytes |
//! | TF images | `GBTF1 <n_images> <n_channels> <freq_bins> <frames>` | f64 values, image-major, index `(f·frames + t)·C + c` within an image |
//! | normalization stats | `GBNS1 <n_channels> <freq_bins>` | `freq_bins·C` f64 means, then as many stds |

use std::fs;
use std::path::Path;

use gblend_core::model::CLASSES;
use gblend_core::signal::{NormalizationStats, RawEpoch, TfImage, EPOCH_SAMPLES, FREQ_BINS, MAX_CHANNELS, SAMPLE_RATE, TIME_FRAMES};

use crate::error::{format_err, io_err, GblendError, Result};

const MAX_HEADER: usize = 256;

/// Labelled epochs of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSignals {
    pub epochs: Vec<RawEpoch>,
    pub labels: Vec<u8>,
}

pub(crate) fn split_header<'a>(bytes: &'a [u8], what: &str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let end = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(what, "missing header line"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(what, "header is not ASCII"))?;
    Ok((line.split_whitespace().collect(), &bytes[end + 1..]))
}

pub(crate) fn header_fields(fields: &[&str], magic: &str, n: usize, what: &str) -> Result<Vec<usize>> {
    if fields.first() != Some(&magic) {
        return Err(format_err(what, format!("expected magic {magic}")));
    }
    if fields.len() != n + 1 {
        return Err(format_err(what, format!("{magic} header takes {n} fields")));
    }
    fields[1..]
        .iter()
        .map(|f| f.parse().map_err(|_| format_err(what, format!("header field {f:?} is not a count"))))
        .collect()
}

fn expect_len(body: &[u8], want: usize, what: &str) -> Result<()> {
    match body.len().cmp(&want) {
        std::cmp::Ordering::Less => Err(format_err(what, format!("truncated payload: {} of {want} bytes", body.len()))),
        std::cmp::Ordering::Greater => Err(format_err(what, format!("{} trailing bytes", body.len() - want))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn encode_raw_signals(s: &RawSignals) -> Result<Vec<u8>> {
    let what = "raw signals";
    if s.epochs.len() != s.labels.len() {
        return Err(format_err(what, format!("{} epochs but {} labels", s.epochs.len(), s.labels.len())));
    }
    let channels = s.epochs.first().map_or(1, RawEpoch::channels);
    if s.epochs.iter().any(|e| e.channels() != channels) {
        return Err(format_err(what, "epochs have different channel counts"));
    }
    let mut out = format!("GBLEND1 {} {channels} {SAMPLE_RATE}\n", s.epochs.len()).into_bytes();
    for e in &s.epochs {
        for &v in e.samples() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&s.labels);
    Ok(out)
}

pub fn decode_raw_signals(bytes: &[u8]) -> Result<RawSignals> {
    let what = "raw signals";
    let (fields, body) = split_header(bytes, what)?;
    let h = header_fields(&fields, "GBLEND1", 3, what)?;
    let (n, channels, rate) = (h[0], h[1], h[2]);
    if rate != SAMPLE_RATE as usize {
        return Err(format_err(what, format!("unsupported sample rate {rate} Hz, only {SAMPLE_RATE} Hz is accepted")));
    }
    if !(1..=MAX_CHANNELS).contains(&channels) {
        return Err(format_err(what, format!("{channels} channels, expected 1 to {MAX_CHANNELS}")));
    }
    let per_epoch = EPOCH_SAMPLES * channels;
    expect_len(body, n * (per_epoch * 4 + 1), what)?;
    let (samples, labels) = body.split_at(n * per_epoch * 4);
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
        return Err(format_err(what, format!("label {l} of epoch {i} is outside 0..{CLASSES}")));
    }
    let epochs = samples
        .chunks_exact(per_epoch * 4)
        .map(|chunk| {
            let v = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64).collect();
            RawEpoch::unlabeled(v, channels).map_err(GblendError::from)
        })
        .collect::<Result<_>>()?;
    Ok(RawSignals { epochs, labels: labels.to_vec() })
}

pub fn write_raw_signals(path: &Path, s: &RawSignals) -> Result<()> {
    write(path, &encode_raw_signals(s)?)
}

pub fn load_raw_signals(path: &Path) -> Result<RawSignals> {
    decode_raw_signals(&read(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: GblendError, path: &Path) -> GblendError {
    match e {
        GblendError::Format { msg, .. } => GblendError::Format { what: path.display().to_string(), msg },
        other => other,
    }
}

pub fn encode_tf_images(images: &[TfImage]) -> Result<Vec<u8>> {
    let channels = images.first().map_or(1, TfImage::channels);
    if images.iter().any(|i| i.channels() != channels) {
        return Err(format_err("TF images", "images have different channel counts"));
    }
    let mut out = format!("GBTF1 {} {channels} {FREQ_BINS} {TIME_FRAMES}\n", images.len()).into_bytes();
    for img in images {
        for v in img.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tf_images(bytes: &[u8]) -> Result<Vec<TfImage>> {
    let what = "TF images";
    let (fields, body) = split_header(bytes, what)?;
    let h = header_fields(&fields, "GBTF1", 4, what)?;
    let (n, channels) = (h[0], h[1]);
    if (h[2], h[3]) != (FREQ_BINS, TIME_FRAMES) || channels == 0 {
        return Err(format_err(what, format!("images must be {FREQ_BINS}x{TIME_FRAMES} with at least one channel")));
    }
    let per_image = FREQ_BINS * TIME_FRAMES * channels;
    expect_len(body, n * per_image * 8, what)?;
    body.chunks_exact(per_image * 8).map(|c| Ok(TfImage::new(f64s(c), channels)?)).collect()
}

pub fn write_tf_images(path: &Path, images: &[TfImage]) -> Result<()> {
    write(path, &encode_tf_images(images)?)
}

pub fn load_tf_images(path: &Path) -> Result<Vec<TfImage>> {
    decode_tf_images(&read(path)?).map_err(|e| with_path(e, path))
}

pub fn encode_stats(s: &NormalizationStats) -> Vec<u8> {
    let mut out = format!("GBNS1 {} {FREQ_BINS}\n", s.channels).into_bytes();
    for v in s.mean.iter().chain(&s.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_stats(bytes: &[u8]) -> Result<NormalizationStats> {
    let what = "normalization stats";
    let (fields, body) = split_header(bytes, what)?;
    let h = header_fields(&fields, "GBNS1", 2, what)?;
    if h[1] != FREQ_BINS || h[0] == 0 {
        return Err(format_err(what, format!("expected {FREQ_BINS} frequency bins and at least one channel")));
    }
    let n = h[0] * FREQ_BINS;
    expect_len(body, 2 * n * 8, what)?;
    let v = f64s(body);
    if v[n..].iter().any(|s| !(*s > 0.0)) {
        return Err(format_err(what, "standard deviations must be positive"));
    }
    Ok(NormalizationStats { channels: h[0], mean: v[..n].to_vec(), std: v[n..].to_vec() })
}

pub fn write_stats(path: &Path, s: &NormalizationStats) -> Result<()> {
    write(path, &encode_stats(s))
}

pub fn load_stats(path: &Path) -> Result<NormalizationStats> {
    decode_stats(&read(path)?).map_err(|e| with_path(e, path))
}
