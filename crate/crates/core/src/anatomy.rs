//! Diaphragm position from the inferior lung surface, and the
//! "surrounded by lung tissue" test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{closest_pair, connected_components};
use crate::ingest::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiaphragmParams {
    /// Band height as a fraction of each lung's bounding-box height.
    pub band_fraction: f64,
}

impl Default for DiaphragmParams {
    fn default() -> Self {
        DiaphragmParams { band_fraction: 0.10 }
    }
}

impl DiaphragmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_fraction > 0.0 && self.band_fraction <= 1.0) {
            return Err(Error::validation("band_fraction", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ContainmentParams {
    /// Required clearance between tumor and the lung region boundary.
    pub margin_mm: f64,
}

impl ContainmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_mm >= 0.0) {
            return Err(Error::validation("margin_mm", "must be >= 0"));
        }
        Ok(())
    }
}

/// Number of rows in the diaphragm band of a lung with bounding-box height
/// `height`: `round_half_up(fraction * height)`, at least one.
pub fn band_rows(fraction: f64, height: usize) -> usize {
    ((fraction * height as f64 + 0.5).floor() as usize).max(1)
}

/// Estimates the diaphragm as the inferior surface of each lung.
///
/// For each of the two largest lung components, the lowest foreground pixel
/// of every column is kept when it lies within `band_rows` rows of that
/// component's lowest row.
pub fn estimate_diaphragm(lung: &BinaryMask, params: DiaphragmParams) -> Result<BinaryMask> {
    params.validate()?;
    let comps = connected_components(lung);
    if comps.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut out = BinaryMask::new(lung.dims(), lung.spacing());
    for comp in comps.iter().take(2) {
        let bbox = comp.bbox;
        let rows = band_rows(params.band_fraction, bbox.height());
        // lowest row of each column; pixels are in raster order so the last
        // write per column wins
        let mut lowest = vec![None; bbox.width()];
        for p in &comp.pixels {
            lowest[p.col - bbox.min_col] = Some(p.row);
        }
        for (i, low) in lowest.into_iter().enumerate() {
            if let Some(row) = low {
                if row + rows > bbox.max_row {
                    out.set(row, bbox.min_col + i, true);
                }
            }
        }
    }
    Ok(out)
}

/// Distance from `tumor` to the boundary of the region `lung ∪ tumor`
/// (pixels of the region with a 4-neighbor outside it, or on the raster
/// edge). Zero when a tumor pixel is itself on that boundary.
pub fn clearance_to_lung_boundary(tumor: &BinaryMask, lung: &BinaryMask) -> Result<f64> {
    tumor.same_grid(lung)?;
    if !tumor.has_foreground() {
        return Err(Error::EmptyMask);
    }
    let region = lung.union(tumor)?;
    let boundary = region.boundary_pixels();
    if boundary.iter().any(|p| tumor.get(p.row, p.col)) {
        return Ok(0.0);
    }
    let spacing = tumor.spacing();
    let (a, b) = closest_pair(&tumor.boundary_pixels(), &boundary, spacing)
        .expect("a non-empty region has a boundary");
    Ok(a.distance_mm(b, spacing))
}

/// True when the tumor lies inside the lung region with more than
/// `margin_mm` of clearance to its boundary.
///
/// The region is `lung ∪ tumor`: a tumor replacing parenchyma still counts as
/// surrounded, while a tumor reaching the outer lung border, a hole in the
/// lung, or the raster edge does not.
pub fn is_surrounded_by_lung(
    tumor: &BinaryMask,
    lung: &BinaryMask,
    params: ContainmentParams,
) -> Result<bool> {
    params.validate()?;
    Ok(clearance_to_lung_boundary(tumor, lung)? > params.margin_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Dims, Pixel, Spacing};
    use proptest::prelude::*;

    fn ellipse(dims: Dims, cr: f64, cc: f64, a: f64, b: f64) -> BinaryMask {
        BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| {
            let (y, x) = ((r as f64 - cr) / a, (c as f64 - cc) / b);
            y * y + x * x <= 1.0
        })
    }

    #[test]
    fn rectangle_gives_bottom_row() {
        let lung = BinaryMask::from_fn(Dims::new(140, 60), Spacing::UNIT, |r, c| {
            (20..=119).contains(&r) && (10..50).contains(&c)
        });
        assert_eq!(band_rows(0.10, 100), 10);
        let d = estimate_diaphragm(&lung, DiaphragmParams::default()).unwrap();
        let expected = BinaryMask::from_fn(lung.dims(), Spacing::UNIT, |r, c| r == 119 && (10..50).contains(&c));
        assert_eq!(d, expected);
    }

    /// Per-column oracle for a single dome-shaped component.
    #[test]
    fn dome_matches_per_column_oracle() {
        let dims = Dims::new(120, 80);
        // flat top, base bulging downward in the middle
        let lung = BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| {
            let x = (c as f64 - 40.0) / 30.0;
            let base = 60.0 + 40.0 * (1.0 - x * x).max(0.0).sqrt();
            (10..70).contains(&c) && r >= 10 && (r as f64) <= base
        });
        let d = estimate_diaphragm(&lung, DiaphragmParams::default()).unwrap();
        let fg: Vec<Pixel> = lung.foreground().collect();
        let r_low = fg.iter().map(|p| p.row).max().unwrap();
        let r_high = fg.iter().map(|p| p.row).min().unwrap();
        let band = ((0.1 * (r_low - r_high + 1) as f64) + 0.5).floor() as usize;
        let mut expected = BinaryMask::new(dims, Spacing::UNIT);
        for c in 0..dims.cols {
            if let Some(b) = (0..dims.rows).rev().find(|&r| lung.get(r, c)) {
                if b + band >= r_low + 1 {
                    expected.set(b, c, true);
                }
            }
        }
        assert_eq!(d, expected);
        // the dome excludes the flanks
        assert!(d.count() > 0 && d.count() < 60);
    }

    #[test]
    fn two_lungs_get_independent_bands() {
        let dims = Dims::new(100, 100);
        let left = ellipse(dims, 40.0, 25.0, 30.0, 15.0);
        let right = ellipse(dims, 50.0, 75.0, 35.0, 15.0);
        let lung = left.union(&right).unwrap();
        let d = estimate_diaphragm(&lung, DiaphragmParams::default()).unwrap();
        assert!(d.foreground().any(|p| p.col < 50 && p.row == 70));
        assert!(d.foreground().any(|p| p.col > 50 && p.row == 85));
        let dl = estimate_diaphragm(&left, DiaphragmParams::default()).unwrap();
        let dr = estimate_diaphragm(&right, DiaphragmParams::default()).unwrap();
        assert_eq!(d, dl.union(&dr).unwrap());
    }

    #[test]
    fn only_two_largest_components_count() {
        let dims = Dims::new(40, 40);
        let lung = BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| {
            (5..30).contains(&r) && ((2..10).contains(&c) || (15..25).contains(&c)) || (r == 35 && c == 35)
        });
        let d = estimate_diaphragm(&lung, DiaphragmParams::default()).unwrap();
        assert!(!d.get(35, 35));
        assert_eq!(d.count(), 18);
    }

    #[test]
    fn empty_lung_is_an_error() {
        let lung = BinaryMask::new(Dims::new(5, 5), Spacing::UNIT);
        assert!(matches!(
            estimate_diaphragm(&lung, DiaphragmParams::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn containment_cases() {
        let dims = Dims::new(60, 60);
        let lung = ellipse(dims, 30.0, 30.0, 25.0, 25.0);
        let deep = ellipse(dims, 30.0, 30.0, 4.0, 4.0);
        let p = ContainmentParams::default();
        assert!(is_surrounded_by_lung(&deep, &lung, p).unwrap());

        // carved out of the lung: still surrounded
        let carved = BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| lung.get(r, c) && !deep.get(r, c));
        assert!(is_surrounded_by_lung(&deep, &carved, p).unwrap());

        // poking one pixel beyond the lung border
        let mut poke = deep.clone();
        for r in 30..=56 {
            poke.set(r, 30, true);
        }
        assert!(!lung.get(56, 30));
        assert!(!is_surrounded_by_lung(&poke, &lung, p).unwrap());

        // abutting the border from inside
        let edge = BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| lung.get(r, c) && r >= 50);
        assert_eq!(clearance_to_lung_boundary(&edge, &lung).unwrap(), 0.0);
        assert!(!is_surrounded_by_lung(&edge, &lung, p).unwrap());

        // margin
        let clear = clearance_to_lung_boundary(&deep, &lung).unwrap();
        assert!(clear > 10.0);
        assert!(!is_surrounded_by_lung(&deep, &lung, ContainmentParams { margin_mm: clear }).unwrap());
    }

    proptest! {
        #[test]
        fn surrounded_is_monotone_in_lung(
            seed in any::<u64>(), tr in 10.0f64..30.0, tc in 10.0f64..30.0, ta in 1.0f64..6.0, grow in 1usize..200,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(40, 40);
            let tumor = ellipse(dims, tr, tc, ta, ta);
            let lung = BinaryMask::from_fn(dims, Spacing::UNIT, |_, _| rng.random_bool(0.7));
            let mut bigger = lung.clone();
            for _ in 0..grow {
                bigger.set(rng.random_range(0..40), rng.random_range(0..40), true);
            }
            let p = ContainmentParams { margin_mm: rng.random_range(0.0..3.0) };
            if is_surrounded_by_lung(&tumor, &lung, p).unwrap() {
                prop_assert!(is_surrounded_by_lung(&tumor, &bigger, p).unwrap());
            }
        }

        #[test]
        fn band_is_subset_of_column_lows(seed in any::<u64>(), frac in 0.01f64..=1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(30, 30);
            let mut lung = BinaryMask::from_fn(dims, Spacing::UNIT, |_, _| rng.random_bool(0.5));
            lung.set(3, 3, true);
            let d = estimate_diaphragm(&lung, DiaphragmParams { band_fraction: frac }).unwrap();
            // lowest pixel of its own component in that column
            let (labels, _) = crate::geometry::label_components(&lung);
            for p in d.foreground() {
                let l = labels[p.row * 30 + p.col];
                prop_assert!(l != 0);
                prop_assert!((p.row + 1..30).all(|r| labels[r * 30 + p.col] != l));
            }
        }

        #[test]
        fn full_fraction_keeps_every_column_low(cr in 10.0f64..20.0, a in 3.0f64..9.0, b in 3.0f64..9.0) {
            let dims = Dims::new(30, 30);
            let lung = ellipse(dims, cr, 15.0, a, b);
            let d = estimate_diaphragm(&lung, DiaphragmParams { band_fraction: 1.0 }).unwrap();
            let cols_with_fg = (0..30).filter(|&c| (0..30).any(|r| lung.get(r, c))).count();
            prop_assert_eq!(d.count(), cols_with_fg);
        }
    }
}
