//! Sleep-staging scores from a 5×5 confusion matrix.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::CLASSES;

/// Counts with rows indexed by the true class and columns by the prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix(pub [[u64; CLASSES]; CLASSES]);

impl ConfusionMatrix {
    pub fn from_pairs(predictions: &[usize], truth: &[usize]) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} labels",
                predictions.len(),
                truth.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::Empty("scored epochs"));
        }
        let mut cm = [[0u64; CLASSES]; CLASSES];
        for (&p, &t) in predictions.iter().zip(truth) {
            if p >= CLASSES || t >= CLASSES {
                return Err(Error::InvalidArgument(format!("class pair ({t}, {p}) outside 0..5")));
            }
            cm[t][p] += 1;
        }
        Ok(Self(cm))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// Element-wise sum, used to pool folds before scoring.
    pub fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        for (r, row) in out.0.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += other.0[r][c];
            }
        }
        out
    }

    pub fn row_sums(&self) -> [u64; CLASSES] {
        self.0.map(|r| r.iter().sum())
    }

    pub fn col_sums(&self) -> [u64; CLASSES] {
        core::array::from_fn(|c| self.0.iter().map(|r| r[c]).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: ConfusionMatrix,
    pub precision: [f64; CLASSES],
    pub recall: [f64; CLASSES],
    pub f1: [f64; CLASSES],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Scores a confusion matrix. Ratios with a zero denominator count as 0,
    /// and all five classes enter every average.
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let n = cm.total();
        if n == 0 {
            return Err(Error::Empty("scored epochs"));
        }
        let (rows, cols) = (cm.row_sums(), cm.col_sums());
        let diag: u64 = (0..CLASSES).map(|k| cm.0[k][k]).sum();
        let mut precision = [0.0; CLASSES];
        let mut recall = [0.0; CLASSES];
        let mut f1 = [0.0; CLASSES];
        let mut specificity = 0.0;
        for k in 0..CLASSES {
            let tp = cm.0[k][k];
            precision[k] = ratio(tp, cols[k]);
            recall[k] = ratio(tp, rows[k]);
            let s = precision[k] + recall[k];
            f1[k] = if s > 0.0 { 2.0 * precision[k] * recall[k] / s } else { 0.0 };
            let fp = cols[k] - tp;
            let tn = n - rows[k] - fp;
            specificity += ratio(tn, tn + fp);
        }
        let nf = n as f64;
        let p_o = diag as f64 / nf;
        let p_e: f64 = (0..CLASSES).map(|k| rows[k] as f64 * cols[k] as f64).sum::<f64>() / (nf * nf);
        let kappa = if p_e < 1.0 { (p_o - p_e) / (1.0 - p_e) } else { 1.0 };
        Ok(Self {
            accuracy: p_o,
            macro_f1: f1.iter().sum::<f64>() / CLASSES as f64,
            kappa,
            sensitivity: recall.iter().sum::<f64>() / CLASSES as f64,
            specificity: specificity / CLASSES as f64,
            confusion: cm,
            precision,
            recall,
            f1,
        })
    }

    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            accuracy: self.accuracy,
            macro_f1: self.macro_f1,
            kappa: self.kappa,
            sensitivity: self.sensitivity,
            specificity: self.specificity,
        }
    }
}

pub fn evaluate_metrics(predictions: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    MetricsReport::from_confusion(ConfusionMatrix::from_pairs(predictions, truth)?)
}

/// The five headline scores.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricSummary {
    pub const NAMES: [&'static str; 5] = ["accuracy", "macro_f1", "kappa", "sensitivity", "specificity"];

    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.macro_f1, self.kappa, self.sensitivity, self.specificity]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self { accuracy: v[0], macro_f1: v[1], kappa: v[2], sensitivity: v[3], specificity: v[4] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldStatistics {
    pub folds: usize,
    pub mean: MetricSummary,
    /// Sample standard deviation; 0 for a single fold.
    pub std: MetricSummary,
}

pub fn fold_statistics(reports: &[MetricsReport]) -> Result<FoldStatistics> {
    if reports.is_empty() {
        return Err(Error::Empty("fold reports"));
    }
    let n = reports.len() as f64;
    let vals: Vec<[f64; 5]> = reports.iter().map(|r| r.summary().values()).collect();
    let mean: [f64; 5] = core::array::from_fn(|i| {
        let m = vals.iter().map(|v| v[i]).sum::<f64>() / n;
        m + vals.iter().map(|v| v[i] - m).sum::<f64>() / n
    });
    let std: [f64; 5] = core::array::from_fn(|i| {
        if reports.len() < 2 {
            0.0
        } else {
            let ss: f64 = vals.iter().map(|v| (v[i] - mean[i]) * (v[i] - mean[i])).sum();
            libm::sqrt(ss / (n - 1.0))
        }
    });
    Ok(FoldStatistics {
        folds: reports.len(),
        mean: MetricSummary::from_values(mean),
        std: MetricSummary::from_values(std),
    })
}
