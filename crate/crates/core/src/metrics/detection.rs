use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, BoxXyxy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoxXyxy,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageDetections {
    #[serde(default)]
    pub image_id: String,
    #[serde(default)]
    pub ground_truth: Vec<BoxXyxy>,
    #[serde(default)]
    pub predictions: Vec<ScoredBox>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionSet {
    pub images: Vec<ImageDetections>,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<()> {
        for (i, img) in self.images.iter().enumerate() {
            for b in img.ground_truth.iter().chain(img.predictions.iter().map(|p| &p.bbox)) {
                b.validate()
                    .map_err(|_| Error::validation(format!("images[{i}]"), "box with max < min"))?;
            }
            if img.predictions.iter().any(|p| !(0.0..=1.0).contains(&p.score)) {
                return Err(Error::validation(format!("images[{i}]"), "score outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn n_ground_truth(&self) -> usize {
        self.images.iter().map(|i| i.ground_truth.len()).sum()
    }

    pub fn n_predictions(&self) -> usize {
        self.images.iter().map(|i| i.predictions.len()).sum()
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou_threshold: f64,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_threshold: Vec<ThresholdAp>,
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
    /// Over all predictions at IoU 0.5; absent without predictions.
    pub precision: Option<f64>,
    /// Over all predictions at IoU 0.5; absent without ground truth.
    pub recall: Option<f64>,
    pub n_ground_truth: usize,
    pub n_predictions: usize,
}

/// Prediction indices of one image in descending score order, ties kept in
/// input order.
fn ranked(preds: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

/// Greedy matching of one image: each prediction, in `order`, takes the
/// unmatched ground-truth box with the highest IoU at or above `threshold`.
/// Returns the true-positive flag of each prediction in `order`.
pub fn greedy_match(gt: &[BoxXyxy], preds: &[ScoredBox], order: &[usize], threshold: f64) -> Vec<bool> {
    let mut taken = vec![false; gt.len()];
    order
        .iter()
        .map(|&i| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gbox) in gt.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = box_iou(&preds[i].bbox, gbox).unwrap_or(0.0);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

struct Ranked {
    score: f64,
    image: usize,
    rank: usize,
}

/// Every prediction of the set, ordered globally by descending score with
/// ties broken by image then per-image rank.
fn global_ranking(d: &DetectionSet) -> (Vec<Vec<usize>>, Vec<Ranked>) {
    let orders: Vec<Vec<usize>> = d.images.iter().map(|img| ranked(&img.predictions)).collect();
    let mut all = Vec::with_capacity(d.n_predictions());
    for (image, order) in orders.iter().enumerate() {
        for (rank, &i) in order.iter().enumerate() {
            all.push(Ranked { score: d.images[image].predictions[i].score, image, rank });
        }
    }
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    (orders, all)
}

/// Cumulative (precision, recall) after each prediction in global rank order.
fn pr_curve(d: &DetectionSet, threshold: f64) -> Vec<(f64, f64)> {
    let n_gt = d.n_ground_truth();
    let (orders, all) = global_ranking(d);
    let flags: Vec<Vec<bool>> = d
        .images
        .iter()
        .zip(&orders)
        .map(|(img, order)| greedy_match(&img.ground_truth, &img.predictions, order, threshold))
        .collect();
    let mut tp = 0usize;
    all.iter()
        .enumerate()
        .map(|(k, r)| {
            if flags[r.image][r.rank] {
                tp += 1;
            }
            (tp as f64 / (k + 1) as f64, tp as f64 / n_gt as f64)
        })
        .collect()
}

/// 101-point interpolated AP from a precision-recall curve.
fn interpolated_ap(curve: &[(f64, f64)]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|c| c.0).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let sum: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            let i = curve.partition_point(|c| c.1 < r);
            envelope.get(i).copied().unwrap_or(0.0)
        })
        .sum();
    sum / 101.0
}

/// Average precision at one IoU threshold; `None` without ground truth.
pub fn average_precision(d: &DetectionSet, threshold: f64) -> Option<f64> {
    if d.n_ground_truth() == 0 {
        return None;
    }
    Some(interpolated_ap(&pr_curve(d, threshold)))
}

pub fn detection_eval(d: &DetectionSet, iou_thresholds: &[f64]) -> Result<DetectionReport> {
    d.validate()?;
    if let Some(t) = iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::validation("iou_thresholds", format!("{t} outside (0, 1]")));
    }
    let per_threshold = iou_thresholds
        .iter()
        .map(|&t| ThresholdAp { iou_threshold: t, ap: average_precision(d, t) })
        .collect();
    let map50_95 = coco_thresholds()
        .iter()
        .map(|&t| average_precision(d, t))
        .collect::<Option<Vec<f64>>>()
        .map(|aps| aps.iter().sum::<f64>() / aps.len() as f64);
    let final_point = pr_curve(d, 0.5).last().copied();
    let n_gt = d.n_ground_truth();
    Ok(DetectionReport {
        per_threshold,
        map50: average_precision(d, 0.5),
        map50_95,
        precision: final_point.map(|p| p.0),
        recall: (n_gt > 0).then(|| final_point.map_or(0.0, |p| p.1)),
        n_ground_truth: n_gt,
        n_predictions: d.n_predictions(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(gt: BoxXyxy, pred: BoxXyxy, score: f64) -> DetectionSet {
        DetectionSet {
            images: vec![ImageDetections {
                image_id: "a".into(),
                ground_truth: vec![gt],
                predictions: vec![ScoredBox { bbox: pred, score }],
            }],
        }
    }

    #[test]
    fn identical_box() {
        let b = BoxXyxy::new(0.0, 0.0, 10.0, 10.0);
        let r = detection_eval(&single(b, b, 1.0), &coco_thresholds()).unwrap();
        assert!(r.per_threshold.iter().all(|t| t.ap == Some(1.0)));
        assert_eq!(r.map50_95, Some(1.0));
        assert_eq!((r.precision, r.recall), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn iou_point_six() {
        let gt = BoxXyxy::new(0.0, 0.0, 10.0, 10.0);
        let pred = BoxXyxy::new(0.0, 0.0, 6.0, 10.0);
        assert_eq!(box_iou(&gt, &pred).unwrap(), 0.6);
        let r = detection_eval(&single(gt, pred, 0.9), &coco_thresholds()).unwrap();
        assert_eq!(r.map50, Some(1.0));
        assert_eq!(r.map50_95, Some(0.3));
        let matched: Vec<bool> = r.per_threshold.iter().map(|t| t.ap == Some(1.0)).collect();
        assert_eq!(matched, [true, true, true, false, false, false, false, false, false, false]);
    }

    #[test]
    fn no_ground_truth_is_absent() {
        let d = DetectionSet {
            images: vec![ImageDetections {
                image_id: "x".into(),
                ground_truth: vec![],
                predictions: vec![ScoredBox { bbox: BoxXyxy::new(0.0, 0.0, 1.0, 1.0), score: 0.5 }],
            }],
        };
        let r = detection_eval(&d, &[0.5]).unwrap();
        assert_eq!((r.map50, r.map50_95, r.recall), (None, None, None));
        assert_eq!(r.precision, Some(0.0));
    }

    #[test]
    fn missed_ground_truth_halves_ap() {
        let b = BoxXyxy::new(0.0, 0.0, 10.0, 10.0);
        let mut d = single(b, b, 0.8);
        d.images[0].ground_truth.push(BoxXyxy::new(50.0, 50.0, 60.0, 60.0));
        let r = detection_eval(&d, &[0.5]).unwrap();
        // recall levels 0.00..=0.50 reach precision 1
        assert!((r.map50.unwrap() - 51.0 / 101.0).abs() < 1e-15);
        assert_eq!(r.recall, Some(0.5));
    }

    #[test]
    fn invalid_inputs() {
        let b = BoxXyxy::new(0.0, 0.0, 10.0, 10.0);
        assert!(detection_eval(&single(b, b, 1.5), &[0.5]).is_err());
        assert!(detection_eval(&single(b, BoxXyxy::new(3.0, 0.0, 1.0, 1.0), 0.5), &[0.5]).is_err());
        assert!(detection_eval(&single(b, b, 0.5), &[0.0]).is_err());
    }

    /// AP from its definition: for each recall level, the best precision over
    /// every top-k cutoff of the ranking whose recall reaches it, with the
    /// matching recomputed from scratch on each cutoff.
    fn oracle_ap(d: &DetectionSet, threshold: f64) -> Option<f64> {
        let n_gt = d.n_ground_truth();
        if n_gt == 0 {
            return None;
        }
        let (orders, all) = global_ranking(d);
        let mut points = Vec::new();
        for k in 1..=all.len() {
            let mut tp = 0;
            for (image, img) in d.images.iter().enumerate() {
                let kept = all[..k].iter().filter(|r| r.image == image).count();
                let flags = greedy_match(&img.ground_truth, &img.predictions, &orders[image][..kept], threshold);
                tp += flags.iter().filter(|&&f| f).count();
            }
            points.push((tp as f64 / k as f64, tp as f64 / n_gt as f64));
        }
        let sum: f64 = (0..=100)
            .map(|i| {
                let r = i as f64 / 100.0;
                points.iter().filter(|p| p.1 >= r).map(|p| p.0).fold(0.0, f64::max)
            })
            .sum();
        Some(sum / 101.0)
    }

    fn arb_scene() -> impl Strategy<Value = DetectionSet> {
        let bx = (0u8..20, 0u8..20, 1u8..12, 1u8..12)
            .prop_map(|(x, y, w, h)| BoxXyxy::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64));
        let pred = (bx.clone(), 0u8..=10).prop_map(|(bbox, s)| ScoredBox { bbox, score: s as f64 / 10.0 });
        let image = (proptest::collection::vec(bx, 0..4), proptest::collection::vec(pred, 0..6))
            .prop_map(|(ground_truth, predictions)| ImageDetections { image_id: String::new(), ground_truth, predictions });
        proptest::collection::vec(image, 1..4).prop_map(|images| DetectionSet { images })
    }

    proptest! {
        #[test]
        fn ap_matches_cutoff_oracle(d in arb_scene(), t in 1u8..=19) {
            let t = t as f64 / 20.0;
            let got = average_precision(&d, t);
            let want = oracle_ap(&d, t);
            match (got, want) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn ap_non_increasing_in_threshold(d in arb_scene()) {
            let aps: Vec<Option<f64>> = coco_thresholds().iter().map(|&t| average_precision(&d, t)).collect();
            for w in aps.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    prop_assert!(b <= a + 1e-12);
                }
            }
        }
    }
}
