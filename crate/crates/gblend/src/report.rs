//! Metrics as text tables and JSON.

use std::fmt::Write as _;

use gblend_core::metrics::{fold_statistics, ConfusionMatrix, FoldStatistics, MetricSummary, MetricsReport};
use gblend_core::model::CLASSES;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const STAGES: [&str; CLASSES] = ["W", "N1", "N2", "N3", "REM"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresJson {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: [[u64; CLASSES]; CLASSES],
    pub precision: [f64; CLASSES],
    pub recall: [f64; CLASSES],
    pub f1: [f64; CLASSES],
}

impl From<&MetricsReport> for ScoresJson {
    fn from(r: &MetricsReport) -> Self {
        Self {
            accuracy: r.accuracy,
            macro_f1: r.macro_f1,
            kappa: r.kappa,
            sensitivity: r.sensitivity,
            specificity: r.specificity,
            confusion: r.confusion.0,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }
}

impl ScoresJson {
    /// Rescores the stored confusion matrix.
    pub fn report(&self) -> Result<MetricsReport> {
        Ok(MetricsReport::from_confusion(ConfusionMatrix(self.confusion))?)
    }
}

/// Contents of `metrics.json` in a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub final_valid_loss: f64,
    /// Mean cross-entropy of the evaluated head on the scored subjects.
    pub loss: f64,
    pub scores: ScoresJson,
}

fn summary_rows(out: &mut String, s: &MetricSummary, std: Option<&MetricSummary>) {
    for (i, name) in MetricSummary::NAMES.iter().enumerate() {
        let v = s.values()[i];
        match std {
            Some(d) => writeln!(out, "{name:<12} {v:>8.4} ± {:.4}", d.values()[i]),
            None => writeln!(out, "{name:<12} {v:>8.4}"),
        }
        .expect("writing to a String");
    }
}

pub fn metrics_table(r: &MetricsReport) -> String {
    let mut out = String::new();
    summary_rows(&mut out, &r.summary(), None);
    out.push_str("\nclass     precision  recall      f1\n");
    for (k, stage) in STAGES.iter().enumerate() {
        writeln!(out, "{stage:<8} {:>10.4} {:>7.4} {:>7.4}", r.precision[k], r.recall[k], r.f1[k]).expect("writing to a String");
    }
    out.push_str("\nconfusion (rows truth, columns prediction)\n      ");
    for s in STAGES {
        write!(out, "{s:>6}").expect("writing to a String");
    }
    out.push('\n');
    for (k, row) in r.confusion.0.iter().enumerate() {
        write!(out, "{:<6}", STAGES[k]).expect("writing to a String");
        for v in row {
            write!(out, "{v:>6}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn run_metrics_text(m: &RunMetrics) -> Result<String> {
    let mut out = format!(
        "mode {}  seed {}  steps {}{}\nfinal validation loss {:.6}\nscored loss {:.6}\n\n",
        m.mode,
        m.seed,
        m.steps_run,
        if m.stopped_early { " (stopped early)" } else { "" },
        m.final_valid_loss,
        m.loss
    );
    out.push_str(&metrics_table(&m.scores.report()?));
    Ok(out)
}

/// Pooled and per-fold reductions over several runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    /// Scores of the summed confusion matrices.
    pub pooled: MetricsReport,
    pub folds: FoldStatistics,
}

#[derive(Serialize)]
struct AggregateJson {
    runs: usize,
    pooled: ScoresJson,
    fold_mean: [f64; 5],
    fold_std: [f64; 5],
    metric_names: [&'static str; 5],
}

pub fn aggregate(runs: &[RunMetrics]) -> Result<Aggregate> {
    let reports = runs.iter().map(|r| r.scores.report()).collect::<Result<Vec<_>>>()?;
    let folds = fold_statistics(&reports)?;
    let cm = reports.iter().skip(1).fold(reports[0].confusion, |acc, r| acc.merge(&r.confusion));
    Ok(Aggregate { pooled: MetricsReport::from_confusion(cm)?, folds })
}

pub fn aggregate_text(a: &Aggregate) -> String {
    let mut out = format!("per-run mean ± sample std over {} runs\n", a.folds.folds);
    summary_rows(&mut out, &a.folds.mean, Some(&a.folds.std));
    out.push_str("\npooled over all scored epochs\n");
    out.push_str(&metrics_table(&a.pooled));
    out
}

pub fn aggregate_json(a: &Aggregate) -> Result<String> {
    let j = AggregateJson {
        runs: a.folds.folds,
        pooled: ScoresJson::from(&a.pooled),
        fold_mean: a.folds.mean.values(),
        fold_std: a.folds.std.values(),
        metric_names: MetricSummary::NAMES,
    };
    Ok(serde_json::to_string_pretty(&j)?)
}
