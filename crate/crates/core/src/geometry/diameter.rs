//! Largest pairwise distance of a pixel point set in physical units.
//!
//! The metric is anisotropic (row and column spacing may differ), but
//! antipodality of hull vertices is invariant under axis scaling, so the hull
//! and the caliper walk run on exact integer pixel coordinates and only the
//! candidate pair distances are evaluated in millimeters.

use super::contour::Contour;
use crate::ingest::{Pixel, Spacing};

/// Point counts at or below this use the quadratic scan.
pub const CALIPERS_MIN_POINTS: usize = 64;

pub fn max_diameter_mm(contour: &Contour, spacing: Spacing) -> f64 {
    max_diameter_points(&contour.points, spacing)
}

pub fn max_diameter_points(points: &[Pixel], spacing: Spacing) -> f64 {
    if points.len() <= CALIPERS_MIN_POINTS {
        max_diameter_brute_force(points, spacing)
    } else {
        max_diameter_calipers(points, spacing)
    }
}

pub fn max_diameter_brute_force(points: &[Pixel], spacing: Spacing) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max(a.distance_sq_mm(b, spacing));
        }
    }
    best.sqrt()
}

pub fn max_diameter_calipers(points: &[Pixel], spacing: Spacing) -> f64 {
    let hull = convex_hull(points);
    farthest_hull_pair(&hull, spacing)
        .map(|(a, b)| a.distance_sq_mm(b, spacing))
        .unwrap_or(0.0)
        .sqrt()
}

/// The pair of points realizing the diameter, if there are at least two
/// distinct points.
pub fn diameter_pair(points: &[Pixel], spacing: Spacing) -> Option<(Pixel, Pixel)> {
    farthest_hull_pair(&convex_hull(points), spacing)
}

fn cross(o: Pixel, a: Pixel, b: Pixel) -> i64 {
    let (ox, oy) = (o.col as i64, o.row as i64);
    (a.col as i64 - ox) * (b.row as i64 - oy) - (a.row as i64 - oy) * (b.col as i64 - ox)
}

/// Andrew's monotone chain. Collinear points are dropped; the hull of a
/// single distinct point is that point.
pub fn convex_hull(points: &[Pixel]) -> Vec<Pixel> {
    let mut pts: Vec<Pixel> = points.to_vec();
    pts.sort_unstable_by_key(|p| (p.col, p.row));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<Pixel> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn farthest_hull_pair(hull: &[Pixel], spacing: Spacing) -> Option<(Pixel, Pixel)> {
    match hull.len() {
        0 | 1 => None,
        2 => Some((hull[0], hull[1])),
        n => {
            let area = |i: usize, j: usize, k: usize| cross(hull[i], hull[j], hull[k]).abs();
            let mut best = (hull[0], hull[1]);
            let mut best_d = hull[0].distance_sq_mm(hull[1], spacing);
            let mut consider = |a: Pixel, b: Pixel| {
                let d = a.distance_sq_mm(b, spacing);
                if d > best_d {
                    best_d = d;
                    best = (a, b);
                }
            };
            let mut j = 1;
            for i in 0..n {
                let ni = (i + 1) % n;
                while area(i, ni, (j + 1) % n) > area(i, ni, j) {
                    j = (j + 1) % n;
                }
                // With an edge parallel to (i, ni) both of its endpoints are
                // antipodal to i and ni.
                let nj = (j + 1) % n;
                consider(hull[i], hull[j]);
                consider(hull[ni], hull[j]);
                consider(hull[i], hull[nj]);
                consider(hull[ni], hull[nj]);
            }
            Some(best)
        }
    }
}
