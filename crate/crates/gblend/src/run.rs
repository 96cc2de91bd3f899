//! Training runs and their output directories.

use std::fs;
use std::path::Path;

use gblend_core::model::Model;
use gblend_core::signal::NormalizationStats;
use gblend_core::train::{evaluate, normalize_all, scoring_windows, train, EvalHead, Evaluation, PreparedSubject, Split, TrainOutcome};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::dataset::load_dataset;
use crate::error::{format_err, io_err, Result};
use crate::formats::write_stats;
use crate::report::{run_metrics_text, RunMetrics, ScoresJson};
use crate::trace::{write_trace, TraceFile};

pub const CONFIG_FILE: &str = "run.cfg";
pub const CHECKPOINT_FILE: &str = "model.gbck";
pub const STATS_FILE: &str = "stats.gbns";
pub const TRACE_FILE: &str = "trace.tsv";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const METRICS_JSON: &str = "metrics.json";

pub fn load_data(cfg: &RunConfig) -> Result<Vec<PreparedSubject>> {
    match &cfg.data_dir {
        Some(dir) => load_dataset(dir),
        None => Ok(cfg.experiment.data()?),
    }
}

/// Seeded random split of `n_subjects`; every subject not used for
/// training or validation is a test subject.
pub fn split_for(cfg: &RunConfig, n_subjects: usize) -> Result<Split> {
    let e = &cfg.experiment;
    let used = e.n_train + e.n_valid;
    if used >= n_subjects {
        return Err(format_err("split", format!("{n_subjects} subjects leave none for testing after {used}")));
    }
    Ok(Split::random(n_subjects, e.n_train, e.n_valid, n_subjects - used, e.spec.seed)?)
}

pub fn trace_file(cfg: &RunConfig, outcome: &TrainOutcome) -> TraceFile {
    let t = cfg.train();
    let scheduler = if t.pinned_weights.is_some() { "fixed" } else { t.mode.name() };
    TraceFile { scheduler: scheduler.to_string(), window: t.window, trace: outcome.trace.clone() }
}

pub fn run_metrics(cfg: &RunConfig, outcome: &TrainOutcome) -> Result<RunMetrics> {
    Ok(RunMetrics {
        mode: cfg.train().mode.name().to_string(),
        seed: cfg.train().seed,
        steps_run: outcome.steps_run,
        stopped_early: outcome.stopped_early,
        final_valid_loss: outcome.final_valid_loss(),
        loss: outcome.test.head_loss,
        scores: ScoresJson::from(&outcome.test.report()?),
    })
}

pub fn train_with(cfg: &RunConfig, data: &[PreparedSubject]) -> Result<TrainOutcome> {
    let split = split_for(cfg, data.len())?;
    Ok(train(cfg.train(), data, &split)?)
}

fn put(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes the config copy, checkpoint, statistics, trace and metrics.
pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<RunMetrics> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    put(&dir.join(CONFIG_FILE), &cfg.render())?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &outcome.model)?;
    write_stats(&dir.join(STATS_FILE), &outcome.stats)?;
    write_trace(&dir.join(TRACE_FILE), &trace_file(cfg, outcome))?;
    let m = run_metrics(cfg, outcome)?;
    put(&dir.join(METRICS_TEXT), &run_metrics_text(&m)?)?;
    put(&dir.join(METRICS_JSON), &(serde_json::to_string_pretty(&m)? + "\n"))?;
    Ok(m)
}

/// Loads data, trains and writes the run directory.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunMetrics> {
    let data = load_data(cfg)?;
    let outcome = train_with(cfg, &data)?;
    write_run(dir, cfg, &outcome)
}

/// Scores `subjects` of raw (unnormalized) `data` with a trained model.
pub fn score(
    model: &Model,
    stats: &NormalizationStats,
    data: &[PreparedSubject],
    subjects: &[usize],
    head: EvalHead,
    chunk: usize,
) -> Result<Evaluation> {
    let data = normalize_all(data, stats)?;
    let windows = scoring_windows(&data, subjects, model.config().seq_len)?;
    Ok(evaluate(model, &data, &windows, head, chunk)?)
}
