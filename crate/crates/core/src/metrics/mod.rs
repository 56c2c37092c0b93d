//! Evaluation: pixelwise segmentation metrics, detection AP/mAP and staging
//! classification tables, with CSV emitters rounded to 4 decimals.

mod detection;
mod segmentation;
mod stage;

pub use detection::{
    average_precision, coco_thresholds, detection_eval, greedy_match, DetectionReport, DetectionSet,
    ImageDetections, ScoredBox, ThresholdAp,
};
pub use segmentation::{confusion_counts, f1, seg_metrics, ConfusionCounts, SegMetrics};
pub use stage::{stage_report, ClassMetrics, StageReportTable};

use crate::staging::TStage;

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_default()
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// One row per named segmentation result.
pub fn seg_table_csv(rows: &[(String, SegMetrics)]) -> String {
    to_csv(
        ["name", "iou", "dsc", "accuracy", "precision", "sensitivity", "specificity", "fnr", "fpr"],
        rows.iter().map(|(name, m)| {
            [
                name.clone(),
                fmt4(m.iou),
                fmt4(m.dsc),
                fmt4(m.accuracy),
                fmt4(m.precision),
                fmt4(m.sensitivity),
                fmt4(m.specificity),
                fmt4(m.fnr),
                fmt4(m.fpr),
            ]
        }),
    )
}

/// One row per named detection result; absent values are empty cells.
pub fn det_table_csv(rows: &[(String, DetectionReport)]) -> String {
    to_csv(
        ["name", "precision", "recall", "f1", "map50", "map50_95"],
        rows.iter().map(|(name, r)| {
            let f = r.precision.zip(r.recall).map(|(p, q)| f1(p, q));
            [
                name.clone(),
                fmt_opt(r.precision),
                fmt_opt(r.recall),
                fmt_opt(f),
                fmt_opt(r.map50),
                fmt_opt(r.map50_95),
            ]
        }),
    )
}

/// AP at each evaluated threshold.
pub fn ap_table_csv(r: &DetectionReport) -> String {
    to_csv(
        ["iou_threshold", "ap"],
        r.per_threshold.iter().map(|t| [format!("{:.2}", t.iou_threshold), fmt_opt(t.ap)]),
    )
}

/// Per-class rows followed by an `accuracy` row.
pub fn stage_table_csv(t: &StageReportTable) -> String {
    let mut rows: Vec<[String; 5]> = t
        .per_class
        .iter()
        .map(|c| [c.stage.to_string(), fmt4(c.precision), fmt4(c.recall), fmt4(c.f1), c.support.to_string()])
        .collect();
    rows.push(["accuracy".into(), String::new(), String::new(), fmt4(t.accuracy), t.total.to_string()]);
    to_csv(["stage", "precision", "recall", "f1", "support"], rows)
}

/// Confusion matrix with ground truth down the rows.
pub fn confusion_csv(t: &StageReportTable) -> String {
    to_csv(
        ["gt\\pred", "T1", "T2", "T3", "T4"],
        TStage::ALL.iter().map(|s| {
            let row = &t.confusion[s.index()];
            [s.to_string(), row[0].to_string(), row[1].to_string(), row[2].to_string(), row[3].to_string()]
        }),
    )
}
