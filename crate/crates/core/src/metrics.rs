//! Pixel-level confusion counting and the two-class metric suite.
//!
//! Counts are pooled globally over every evaluated pixel by default. Ratios
//! whose denominator is zero evaluate to 0 and are listed in
//! [`MetricsReport::undefined`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Pixel counts with "change" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with the class roles exchanged (tp↔tn, fp↔fn).
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// Adds one prediction/target pair to the counts.
    pub fn accumulate(mut self, pred: &BinaryMask, target: &BinaryMask) -> Result<Self> {
        if pred.dims() != target.dims() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs target {:?}",
                pred.dims(),
                target.dims()
            )));
        }
        // index = 2 * pred + target: 0 → tn, 1 → fn, 2 → fp, 3 → tp
        let mut bins = [0u64; 4];
        for (&p, &t) in pred.as_raw().iter().zip(target.as_raw()) {
            bins[(2 * p + t) as usize] += 1;
        }
        self.tn += bins[0];
        self.fn_ += bins[1];
        self.fp += bins[2];
        self.tp += bins[3];
        Ok(self)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        self.merge(&rhs)
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn accumulate_confusion(
    pred: &BinaryMask,
    target: &BinaryMask,
    acc: ConfusionCounts,
) -> Result<ConfusionCounts> {
    acc.accumulate(pred, target)
}

/// Metrics for one class treated as positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub acc: f64,
    /// Names of fields whose denominator was zero.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<ClassMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let mut undefined = Vec::new();
    let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut undefined);
    let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".to_string());
        0.0
    };
    let iou = ratio(c.tp, c.tp + c.fp + c.fn_, "iou", &mut undefined);
    let acc = (c.tp + c.tn) as f64 / c.total() as f64;
    Ok(ClassMetrics {
        precision,
        recall,
        f1,
        iou,
        acc,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "aACC")]
    pub a_acc: f64,
    #[serde(rename = "mFscore")]
    pub m_fscore: f64,
    #[serde(rename = "mPrecision")]
    pub m_precision: f64,
    #[serde(rename = "mRecall")]
    pub m_recall: f64,
    #[serde(rename = "mIoU")]
    pub m_iou: f64,
    pub change: ClassMetrics,
    pub no_change: ClassMetrics,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub undefined: Vec<String>,
}

/// Two-class means. Both inputs must come from the same counts, the
/// no-change set from the swapped confusion.
pub fn mean_metrics(change: &ClassMetrics, no_change: &ClassMetrics) -> MetricsReport {
    let mut undefined: Vec<String> = change.undefined.iter().map(|f| format!("change.{f}")).collect();
    undefined.extend(no_change.undefined.iter().map(|f| format!("no_change.{f}")));
    MetricsReport {
        a_acc: change.acc,
        m_fscore: (change.f1 + no_change.f1) / 2.0,
        m_precision: (change.precision + no_change.precision) / 2.0,
        m_recall: (change.recall + no_change.recall) / 2.0,
        m_iou: (change.iou + no_change.iou) / 2.0,
        change: change.clone(),
        no_change: no_change.clone(),
        undefined,
    }
}

impl MetricsReport {
    pub fn from_confusion(c: &ConfusionCounts) -> Result<Self> {
        let change = compute_metrics(c)?;
        let no_change = compute_metrics(&c.swapped())?;
        Ok(mean_metrics(&change, &no_change))
    }

    /// Unweighted average of per-image reports.
    pub fn average(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyConfusion);
        }
        let n = reports.len() as f64;
        let avg_class = |get: fn(&MetricsReport) -> &ClassMetrics| ClassMetrics {
            precision: reports.iter().map(|r| get(r).precision).sum::<f64>() / n,
            recall: reports.iter().map(|r| get(r).recall).sum::<f64>() / n,
            f1: reports.iter().map(|r| get(r).f1).sum::<f64>() / n,
            iou: reports.iter().map(|r| get(r).iou).sum::<f64>() / n,
            acc: reports.iter().map(|r| get(r).acc).sum::<f64>() / n,
            undefined: Vec::new(),
        };
        let mut report = mean_metrics(&avg_class(|r| &r.change), &avg_class(|r| &r.no_change));
        let mut undefined: Vec<String> = reports.iter().flat_map(|r| r.undefined.iter().cloned()).collect();
        undefined.sort();
        undefined.dedup();
        report.undefined = undefined;
        Ok(report)
    }

    /// Copy with every ratio expressed as a percentage rounded to two
    /// decimals, the layout used by the published comparison tables.
    pub fn as_percentages(&self) -> Self {
        let pct = |v: f64| (v * 10_000.0).round() / 100.0;
        let class = |c: &ClassMetrics| ClassMetrics {
            precision: pct(c.precision),
            recall: pct(c.recall),
            f1: pct(c.f1),
            iou: pct(c.iou),
            acc: pct(c.acc),
            undefined: c.undefined.clone(),
        };
        Self {
            a_acc: pct(self.a_acc),
            m_fscore: pct(self.m_fscore),
            m_precision: pct(self.m_precision),
            m_recall: pct(self.m_recall),
            m_iou: pct(self.m_iou),
            change: class(&self.change),
            no_change: class(&self.no_change),
            undefined: self.undefined.clone(),
        }
    }

    /// Percent-formatted JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.as_percentages())? + "\n")
    }

    /// `[aACC, mFscore, mPrecision, mRecall, mIoU]` as fractions.
    pub fn headline(&self) -> [f64; 5] {
        [self.a_acc, self.m_fscore, self.m_precision, self.m_recall, self.m_iou]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScope {
    /// Pool pixel counts over the whole split.
    #[default]
    Global,
    /// Compute a report per image and average.
    PerImage,
}

/// Accumulates predictions under either scope.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    scope: EvalScope,
    pooled: ConfusionCounts,
    per_image: Vec<MetricsReport>,
}

impl MetricsAccumulator {
    pub fn new(scope: EvalScope) -> Self {
        Self {
            scope,
            ..Default::default()
        }
    }

    pub fn add(&mut self, pred: &BinaryMask, target: &BinaryMask) -> Result<()> {
        let counts = ConfusionCounts::default().accumulate(pred, target)?;
        self.add_counts(counts)
    }

    pub fn add_counts(&mut self, counts: ConfusionCounts) -> Result<()> {
        self.pooled = self.pooled + counts;
        if self.scope == EvalScope::PerImage {
            self.per_image.push(MetricsReport::from_confusion(&counts)?);
        }
        Ok(())
    }

    pub fn counts(&self) -> ConfusionCounts {
        self.pooled
    }

    pub fn report(&self) -> Result<MetricsReport> {
        match self.scope {
            EvalScope::Global => MetricsReport::from_confusion(&self.pooled),
            EvalScope::PerImage => MetricsReport::average(&self.per_image),
        }
    }
}
