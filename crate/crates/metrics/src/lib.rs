//! Object-level detection matching and node-classification metrics.
//!
//! Both pipelines end here: detected regions are matched to ground-truth
//! boxes by IoU with a greedy one-to-one assignment, and node classifiers are
//! scored with per-class and macro-averaged precision/recall/F1. Everything
//! is a pure function with explicit zero-denominator conventions, so each
//! value is reproducible by hand.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and truth arrays differ in length: {preds} vs {truth}")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class count must be at least 1")]
    NoClasses,
}

/// Axis-aligned box with continuous-area semantics: a box covering pixels
/// [0,10)x[0,10) has corners (0,0)-(10,10) and area 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    /// Normalizing constructor: corners may come in any order.
    pub fn new(xa: f64, ya: f64, xb: f64, yb: f64) -> Self {
        BBox {
            x0: xa.min(xb),
            y0: ya.min(yb),
            x1: xa.max(xb),
            y1: ya.max(yb),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Intersection-over-union of two boxes, in [0, 1].
///
/// Degenerate (zero-area) operands yield 0 by convention, including the
/// exactly-coincident case.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let area_a = a.area();
    let area_b = b.area();
    if area_a == 0.0 || area_b == 0.0 {
        return 0.0;
    }
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    let union = area_a + area_b - inter;
    inter / union
}

/// A prediction entering the matcher: a box plus its detection score. The
/// score is carried through to the pairing output but plays no role in the
/// matching order, which is purely IoU-greedy.
#[derive(Debug, Clone, Copy)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
}

/// One matched (prediction, ground truth) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub pred_idx: usize,
    pub gt_idx: usize,
    pub iou: f64,
}

/// Result of greedy one-to-one detection matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Match predictions to ground truths greedily in descending IoU order at the
/// given inclusive threshold.
///
/// Each prediction matches at most one ground truth and vice versa. Ties in
/// IoU are broken by lower prediction index, then lower ground-truth index,
/// which makes the result fully deterministic.
pub fn match_detections(preds: &[ScoredBox], gts: &[BBox], iou_threshold: f64) -> MatchResult {
    let mut candidates: Vec<MatchPair> = Vec::new();
    for (pi, p) in preds.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            let v = iou(&p.bbox, g);
            if v >= iou_threshold && v > 0.0 {
                candidates.push(MatchPair {
                    pred_idx: pi,
                    gt_idx: gi,
                    iou: v,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .expect("IoU values are finite")
            .then(a.pred_idx.cmp(&b.pred_idx))
            .then(a.gt_idx.cmp(&b.gt_idx))
    });

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.pred_idx] && !gt_used[c.gt_idx] {
            pred_used[c.pred_idx] = true;
            gt_used[c.gt_idx] = true;
            pairs.push(c);
        }
    }

    let tp = pairs.len() as u64;
    MatchResult {
        tp,
        fp: preds.len() as u64 - tp,
        fn_: gts.len() as u64 - tp,
        pairs,
    }
}

/// Precision, recall, and F1 from raw counts, each defined as 0 when its
/// denominator is 0.
pub fn detection_f1(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Per-class slice of a classification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Detection counts carried alongside a detection-mode report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Shared report shape for both evaluation modes.
///
/// Node-classification mode fills `per_class` and `accuracy`; detection mode
/// fills `detection` and carries the single P/R/F1 in the macro slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionCounts>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// Build a detection-mode report from counts.
    pub fn from_detection_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let (p, r, f1) = detection_f1(tp, fp, fn_);
        MetricsReport {
            per_class: Vec::new(),
            macro_precision: p,
            macro_recall: r,
            macro_f1: f1,
            accuracy: None,
            detection: Some(DetectionCounts { tp, fp, fn_ }),
            warnings: Vec::new(),
        }
    }

    /// Aligned-column text rendering for terminal output.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if let Some(d) = self.detection {
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>6}\n",
                "counts", "tp", "fp", "fn"
            ));
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>6}\n",
                "", d.tp, d.fp, d.fn_
            ));
            out.push_str(&format!(
                "{:<10} {:>9.4} {:>9.4} {:>9.4}\n",
                "p/r/f1", self.macro_precision, self.macro_recall, self.macro_f1
            ));
            return out;
        }
        out.push_str(&format!(
            "{:<8} {:>9} {:>9} {:>9} {:>8}\n",
            "class", "precision", "recall", "f1", "support"
        ));
        for (c, m) in self.per_class.iter().enumerate() {
            out.push_str(&format!(
                "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                c, m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!(
            "{:<8} {:>9.4} {:>9.4} {:>9.4}\n",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        ));
        if let Some(acc) = self.accuracy {
            out.push_str(&format!("accuracy {acc:>9.4}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Per-class one-vs-rest precision/recall/F1, macro averages, and accuracy
/// for `classes`-way node predictions.
///
/// Classes absent from the truth contribute zeros to the macro mean and are
/// flagged in `warnings`.
pub fn node_classification_report(
    pred_labels: &[usize],
    true_labels: &[usize],
    classes: usize,
) -> Result<MetricsReport, MetricsError> {
    if classes == 0 {
        return Err(MetricsError::NoClasses);
    }
    if pred_labels.len() != true_labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: pred_labels.len(),
            truth: true_labels.len(),
        });
    }
    for &l in pred_labels.iter().chain(true_labels) {
        if l >= classes {
            return Err(MetricsError::LabelOutOfRange { label: l, classes });
        }
    }

    let n = true_labels.len();
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    let mut support = vec![0u64; classes];
    let mut correct = 0u64;
    for (&p, &t) in pred_labels.iter().zip(true_labels) {
        support[t] += 1;
        if p == t {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }

    let mut per_class = Vec::with_capacity(classes);
    let mut warnings = Vec::new();
    for c in 0..classes {
        let (p, r, f1) = detection_f1(tp[c], fp[c], fn_[c]);
        if support[c] == 0 {
            warnings.push(format!(
                "class {c} absent from truth; contributes zeros to macro averages"
            ));
        }
        per_class.push(ClassMetrics {
            precision: p,
            recall: r,
            f1,
            support: support[c],
        });
    }

    let kf = classes as f64;
    Ok(MetricsReport {
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / kf,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / kf,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / kf,
        accuracy: Some(if n == 0 { 0.0 } else { correct as f64 / n as f64 }),
        detection: None,
        warnings,
        per_class,
    })
}
