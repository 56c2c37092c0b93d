//! mAP50 and mAP50-95 for a handful of boxes.

use tstage::geometry::BoxXyxy;
use tstage::metrics::{ap_table_csv, coco_thresholds, detection_eval, DetectionSet, ImageDetections, ScoredBox};

fn main() -> tstage::Result<()> {
    let b = BoxXyxy::new;
    let set = DetectionSet {
        images: vec![
            ImageDetections {
                image_id: "slice_a".into(),
                ground_truth: vec![b(10.0, 10.0, 40.0, 40.0), b(60.0, 60.0, 80.0, 90.0)],
                predictions: vec![
                    ScoredBox { bbox: b(11.0, 9.0, 41.0, 38.0), score: 0.95 },
                    ScoredBox { bbox: b(62.0, 58.0, 84.0, 92.0), score: 0.70 },
                    ScoredBox { bbox: b(0.0, 100.0, 10.0, 110.0), score: 0.40 },
                ],
            },
            ImageDetections {
                image_id: "slice_b".into(),
                ground_truth: vec![b(20.0, 30.0, 50.0, 45.0)],
                predictions: vec![ScoredBox { bbox: b(25.0, 30.0, 50.0, 50.0), score: 0.80 }],
            },
        ],
    };
    let report = detection_eval(&set, &coco_thresholds())?;
    println!("mAP50 {:?}  mAP50-95 {:?}", report.map50, report.map50_95);
    println!("precision {:?}  recall {:?}", report.precision, report.recall);
    print!("{}", ap_table_csv(&report));
    Ok(())
}
