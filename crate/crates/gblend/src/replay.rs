//! Offline scheduler replay over exported traces.

use std::fmt::Write as _;

use gblend_core::blend::{replay, BlendWeights, Scheduler, V2State};
use gblend_core::train::Mode;

use crate::error::Result;
use crate::trace::TraceFile;

/// Weight trajectories of both adaptive schedulers over one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub v1: Vec<BlendWeights>,
    pub v2: Vec<BlendWeights>,
}

pub fn replay_both(t: &TraceFile, window: usize) -> Result<Replay> {
    Ok(Replay {
        v1: replay(&t.trace, Scheduler::V1)?,
        v2: replay(&t.trace, Scheduler::V2(V2State::new(window)?))?,
    })
}

pub fn max_deviation(a: &[BlendWeights], b: &[BlendWeights]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).flat_map(|(x, y)| x.0.iter().zip(&y.0).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

/// Largest difference between the recorded weights and those the recording
/// scheduler produces on replay; `None` when the trace did not come from an
/// adaptive scheduler.
pub fn recorded_deviation(t: &TraceFile, r: &Replay) -> Option<f64> {
    let replayed = match Mode::from_name(&t.scheduler)? {
        Mode::BlendV1 => &r.v1,
        Mode::BlendV2 => &r.v2,
        _ => return None,
    };
    Some(max_deviation(replayed, &t.trace.weights))
}

/// Tab-separated `step scheduler w_raw w_tf w_joint`, v1 rows first.
pub fn encode_replay(t: &TraceFile, r: &Replay) -> String {
    let mut out = String::from("step\tscheduler\tw_raw\tw_tf\tw_joint\n");
    for (name, ws) in [("blend_v1", &r.v1), ("blend_v2", &r.v2)] {
        for (step, w) in t.trace.steps.iter().zip(ws) {
            writeln!(out, "{step}\t{name}\t{}\t{}\t{}", w.0[0], w.0[1], w.0[2]).expect("writing to a String");
        }
    }
    out
}
