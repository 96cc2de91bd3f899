//! Loss-trace text files.
//!
//! ```text
//! # scheduler=blend_v2 window=20
//! step	branch	train_loss	valid_loss	weight
//! 0	raw	1.61	1.60	0.3333333333333333
//! 0	tf	...
//! 0	joint	...
//! ```
//!
//! One row per branch and evaluation, branches in `raw`, `tf`, `joint`
//! order. Values are written in shortest round-trip form, so reading a file
//! back gives the recorded numbers exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gblend_core::blend::{BlendWeights, Branch, LossTrace};

use crate::error::{format_err, io_err, Result};

pub const COLUMNS: [&str; 5] = ["step", "branch", "train_loss", "valid_loss", "weight"];

#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    /// Name of the mode that produced the weights.
    pub scheduler: String,
    pub window: usize,
    pub trace: LossTrace,
}

pub fn encode_trace(t: &TraceFile) -> String {
    let mut out = format!("# scheduler={} window={}\n{}\n", t.scheduler, t.window, COLUMNS.join("\t"));
    for (i, step) in t.trace.steps.iter().enumerate() {
        for b in Branch::ALL {
            let k = b.index();
            let w = t.trace.weights.get(i).map_or(f64::NAN, |w| w.0[k]);
            writeln!(out, "{step}\t{}\t{}\t{}\t{w}", b.name(), t.trace.train[k][i], t.trace.valid[k][i]).expect("writing to a String");
        }
    }
    out
}

pub fn decode_trace(text: &str) -> Result<TraceFile> {
    let what = "loss trace";
    let err = |line: usize, msg: String| format_err(what, format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, meta) = lines.next().ok_or_else(|| format_err(what, "empty file"))?;
    let meta = meta.strip_prefix('#').ok_or_else(|| err(1, "expected a '# scheduler=… window=…' line".into()))?;
    let (mut scheduler, mut window) = (None, None);
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("scheduler", v)) => scheduler = Some(v.to_string()),
            Some(("window", v)) => window = Some(v.parse().map_err(|_| err(1, format!("bad window {v:?}")))?),
            _ => return Err(err(1, format!("unknown header field {field:?}"))),
        }
    }
    let (scheduler, window) = scheduler.zip(window).ok_or_else(|| err(1, "header needs scheduler and window".into()))?;
    match lines.next() {
        Some((_, h)) if h.split('\t').eq(COLUMNS) => {}
        _ => return Err(err(2, format!("expected the column header {}", COLUMNS.join(" ")))),
    }

    let mut trace = LossTrace::new();
    let rows: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.trim().is_empty()).collect();
    if rows.len() % 3 != 0 {
        return Err(format_err(what, "row count is not a multiple of the three branches"));
    }
    for group in rows.chunks(3) {
        let mut step = None;
        let (mut train, mut valid, mut weight) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        for (b, &(line, row)) in Branch::ALL.into_iter().zip(group) {
            let f: Vec<&str> = row.split('\t').collect();
            if f.len() != COLUMNS.len() {
                return Err(err(line, format!("expected {} tab-separated fields", COLUMNS.len())));
            }
            let s: usize = f[0].parse().map_err(|_| err(line, format!("bad step {:?}", f[0])))?;
            if *step.get_or_insert(s) != s {
                return Err(err(line, "branch rows of one evaluation disagree on the step".into()));
            }
            if f[1] != b.name() {
                return Err(err(line, format!("expected branch {}, got {:?}", b.name(), f[1])));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| err(line, format!("bad {} {:?}", COLUMNS[i], f[i])));
            let k = b.index();
            (train[k], valid[k], weight[k]) = (num(2)?, num(3)?, num(4)?);
        }
        trace.record(step.expect("three rows"), train, valid).map_err(|e| format_err(what, e.to_string()))?;
        trace.weights.push(BlendWeights(weight));
    }
    Ok(TraceFile { scheduler, window, trace })
}

pub fn write_trace(path: &Path, t: &TraceFile) -> Result<()> {
    fs::write(path, encode_trace(t)).map_err(io_err(path))
}

pub fn load_trace(path: &Path) -> Result<TraceFile> {
    decode_trace(&fs::read_to_string(path).map_err(io_err(path))?)
}
