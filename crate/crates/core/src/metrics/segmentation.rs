use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

/// Pixelwise tallies of a prediction against ground truth.
pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimsMismatch {
            expected: gt.dims().as_tuple(),
            found: pred.dims().as_tuple(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub iou: f64,
    pub dsc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// `num / den`, or the empty-set convention when `den == 0`: 1.0 if the
/// complementary error count is also zero (both sides empty), else 0.0.
fn ratio(num: u64, den: u64, other_errors: u64) -> f64 {
    if den == 0 {
        if other_errors == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// FNR is `FN / (TP + FN)`, the complement of sensitivity.
pub fn seg_metrics(c: &ConfusionCounts) -> SegMetrics {
    let ConfusionCounts { tp, fp, fn_, tn } = *c;
    let sensitivity = ratio(tp, tp + fn_, fp);
    let specificity = ratio(tn, tn + fp, fn_);
    SegMetrics {
        iou: ratio(tp, tp + fp + fn_, 0),
        dsc: ratio(2 * tp, 2 * tp + fp + fn_, 0),
        accuracy: ratio(tp + tn, c.total(), 0),
        precision: ratio(tp, tp + fp, fn_),
        sensitivity,
        specificity,
        fnr: if tp + fn_ == 0 { 1.0 - sensitivity } else { fn_ as f64 / (tp + fn_) as f64 },
        fpr: if fp + tn == 0 { 1.0 - specificity } else { fp as f64 / (fp + tn) as f64 },
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
