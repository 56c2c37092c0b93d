use serde::{Deserialize, Serialize};

use super::f1;
use crate::error::{Error, Result};
use crate::staging::TStage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub stage: TStage,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ground-truth count.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReportTable {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// `confusion[gt][pred]`, indexed T1..T4.
    pub confusion: [[usize; 4]; 4],
    pub total: usize,
}

fn safe_div(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and overall agreement of predicted stages with ground truth.
/// Classes with no support or no predictions get 0 for the undefined ratio.
pub fn stage_report(pred: &[TStage], gt: &[TStage]) -> Result<StageReportTable> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: gt.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut confusion = [[0usize; 4]; 4];
    for (p, g) in pred.iter().zip(gt) {
        confusion[g.index()][p.index()] += 1;
    }
    let per_class = TStage::ALL
        .iter()
        .map(|&s| {
            let i = s.index();
            let tp = confusion[i][i];
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = safe_div(tp, predicted);
            let recall = safe_div(tp, support);
            ClassMetrics { stage: s, precision, recall, f1: f1(precision, recall), support }
        })
        .collect();
    let correct: usize = (0..4).map(|i| confusion[i][i]).sum();
    Ok(StageReportTable {
        per_class,
        accuracy: correct as f64 / pred.len() as f64,
        confusion,
        total: pred.len(),
    })
}
