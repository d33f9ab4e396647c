//! Pixel-level segmentation metrics: per-class IoU, recall and precision.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decision::{LabelMap, IGNORE};
use crate::error::{Error, Result};

/// Per-class pixel counts over pixels whose ground truth is not ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub ignore_pixels: u64,
}

impl ClassCounts {
    pub fn new(n_classes: usize) -> Self {
        Self {
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            fn_: vec![0; n_classes],
            ignore_pixels: 0,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.tp.len()
    }

    /// Adds another image's counts.
    pub fn merge(&mut self, other: &ClassCounts) -> Result<()> {
        if other.n_classes() != self.n_classes() {
            return Err(Error::shape(
                format!("{} classes", self.n_classes()),
                format!("{} classes", other.n_classes()),
            ));
        }
        for k in 0..self.n_classes() {
            self.tp[k] += other.tp[k];
            self.fp[k] += other.fp[k];
            self.fn_[k] += other.fn_[k];
        }
        self.ignore_pixels += other.ignore_pixels;
        Ok(())
    }
}

/// Counts TP/FP/FN per class. Pixels with ignored ground truth are skipped;
/// an ignored prediction on a labelled pixel counts as a miss only.
pub fn confusion_counts(pred: &LabelMap, gt: &LabelMap, n_classes: usize) -> Result<ClassCounts> {
    if !pred.same_shape(gt) {
        return Err(Error::shape(
            format!("{}x{}", gt.height(), gt.width()),
            format!("{}x{}", pred.height(), pred.width()),
        ));
    }
    pred.check_classes(n_classes)?;
    gt.check_classes(n_classes)?;
    let mut counts = ClassCounts::new(n_classes);
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == IGNORE {
            counts.ignore_pixels += 1;
            continue;
        }
        if p == g {
            counts.tp[usize::from(g)] += 1;
        } else {
            counts.fn_[usize::from(g)] += 1;
            if p != IGNORE {
                counts.fp[usize::from(p)] += 1;
            }
        }
    }
    Ok(counts)
}

/// Metric values for one class; `None` when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub iou: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted means over classes with a defined value.
    pub mean_iou: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_precision: Option<f64>,
    /// Classes left out of the means, per metric.
    pub undefined_iou: Vec<usize>,
    pub undefined_recall: Vec<usize>,
    pub undefined_precision: Vec<usize>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Vec<usize>) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut undefined = Vec::new();
    for (k, v) in values.enumerate() {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => undefined.push(k),
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

pub fn compute_metrics(c: &ClassCounts) -> MetricsReport {
    let per_class: Vec<ClassMetrics> = (0..c.n_classes())
        .map(|k| {
            let (tp, fp, fn_) = (c.tp[k], c.fp[k], c.fn_[k]);
            ClassMetrics {
                iou: ratio(tp, tp + fp + fn_),
                recall: ratio(tp, tp + fn_),
                precision: ratio(tp, tp + fp),
            }
        })
        .collect();
    let (mean_iou, undefined_iou) = mean_defined(per_class.iter().map(|m| m.iou));
    let (mean_recall, undefined_recall) = mean_defined(per_class.iter().map(|m| m.recall));
    let (mean_precision, undefined_precision) = mean_defined(per_class.iter().map(|m| m.precision));
    MetricsReport {
        per_class,
        mean_iou,
        mean_recall,
        mean_precision,
        undefined_iou,
        undefined_recall,
        undefined_precision,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Plain-text table with mean and focus-class columns (percent), one row per
/// named report.
pub fn render_table(
    rows: &[(&str, &MetricsReport)],
    focus_class: usize,
    focus_name: &str,
) -> String {
    let headers = [
        "mean IoU".to_string(),
        "mean recall".to_string(),
        "mean precision".to_string(),
        format!("{focus_name} IoU"),
        format!("{focus_name} recall"),
        format!("{focus_name} precision"),
    ];
    let name_width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("rule".len()))
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "rule");
    for h in &headers {
        let _ = write!(out, " | {h:>w$}", w = h.len().max(6));
    }
    out.push('\n');
    let total = name_width + headers.iter().map(|h| h.len().max(6) + 3).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (name, report) in rows {
        let focus = report.per_class.get(focus_class);
        let cells = [
            pct(report.mean_iou),
            pct(report.mean_recall),
            pct(report.mean_precision),
            pct(focus.and_then(|m| m.iou)),
            pct(focus.and_then(|m| m.recall)),
            pct(focus.and_then(|m| m.precision)),
        ];
        let _ = write!(out, "{name:<name_width$}");
        for (h, cell) in headers.iter().zip(cells) {
            let _ = write!(out, " | {cell:>w$}", w = h.len().max(6));
        }
        out.push('\n');
    }
    out
}
