use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BinaryMask, Pixel, Spacing};

/// Minimum center-to-center separation between two masks in mm.
///
/// Zero when the masks share a pixel; otherwise the minimum over pairs of
/// boundary pixels (the nearest pixel of a region to anything outside it is
/// always one of its boundary pixels).
pub fn min_distance_mm(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_grid(b)?;
    if !a.has_foreground() || !b.has_foreground() {
        return Err(Error::EmptyMask);
    }
    if a.intersects(b)? {
        return Ok(0.0);
    }
    let pa = a.boundary_pixels();
    let pb = b.boundary_pixels();
    Ok(closest_pair(&pa, &pb, a.spacing())
        .map(|(x, y)| x.distance_mm(y, a.spacing()))
        .expect("both boundaries are non-empty"))
}

/// Nearest pair between two point sets; `None` if either is empty.
///
/// Points of `b` are bucketed by row and scanned outward from each query row
/// until the row gap alone exceeds the best distance found. The result is
/// the same pair value an exhaustive scan yields.
pub fn closest_pair(a: &[Pixel], b: &[Pixel], spacing: Spacing) -> Option<(Pixel, Pixel)> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let mut rows: BTreeMap<usize, Vec<Pixel>> = BTreeMap::new();
    for &p in b {
        rows.entry(p.row).or_default().push(p);
    }
    let row_keys: Vec<usize> = rows.keys().copied().collect();
    let buckets: Vec<&Vec<Pixel>> = rows.values().collect();

    let mut best: Option<(f64, Pixel, Pixel)> = None;
    for &p in a {
        let split = row_keys.partition_point(|&r| r < p.row);
        let mut below = split;
        let mut above = split;
        loop {
            let gap_below = (below < row_keys.len()).then(|| row_gap_sq(p.row, row_keys[below], spacing));
            let gap_above = (above > 0).then(|| row_gap_sq(p.row, row_keys[above - 1], spacing));
            let (idx, gap) = match (gap_below, gap_above) {
                (Some(gb), Some(ga)) if gb <= ga => (below, gb),
                (Some(_), Some(ga)) => (above - 1, ga),
                (Some(gb), None) => (below, gb),
                (None, Some(ga)) => (above - 1, ga),
                (None, None) => break,
            };
            if let Some((d, _, _)) = best {
                if gap > d {
                    break;
                }
            }
            for &q in buckets[idx] {
                let d = p.distance_sq_mm(q, spacing);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, p, q));
                }
            }
            if idx == below {
                below += 1;
            } else {
                above -= 1;
            }
        }
    }
    best.map(|(_, p, q)| (p, q))
}

fn row_gap_sq(a: usize, b: usize, spacing: Spacing) -> f64 {
    let d = (a as i64 - b as i64) as f64 * spacing.row;
    d * d
}

/// Farthest pair between two point sets (exhaustive).
pub fn farthest_pair(a: &[Pixel], b: &[Pixel], spacing: Spacing) -> Option<(Pixel, Pixel)> {
    let mut best: Option<(f64, Pixel, Pixel)> = None;
    for &p in a {
        for &q in b {
            let d = p.distance_sq_mm(q, spacing);
            if best.is_none_or(|(bd, _, _)| d > bd) {
                best = Some((d, p, q));
            }
        }
    }
    best.map(|(_, p, q)| (p, q))
}

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXyxy {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoxXyxy {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BoxXyxy { x_min, y_min, x_max, y_max }
    }

    pub fn validate(&self) -> Result<()> {
        // negated comparisons also reject NaN
        if !(self.x_max >= self.x_min) || !(self.y_max >= self.y_min) {
            return Err(Error::DegenerateBox);
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn box_iou(a: &BoxXyxy, b: &BoxXyxy) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        // both boxes have zero area
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok(inter / union)
}
