//! Brute-force staging oracle over raw pixel sets.
//!
//! Shares nothing with the geometry module: components come from a BFS
//! flood fill, borders from flood-filling the outside of a padded raster,
//! and every distance from an exhaustive scan over pixel pairs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::anatomy::{ContainmentParams, DiaphragmParams};
use crate::error::{Error, Result};
use crate::ingest::{BinaryMask, Spacing, Structure, Study};
use crate::staging::{InvadedStructure, StagingRules, TStage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub size_mm: f64,
    pub in_plane_max_mm: f64,
    pub depth_mm: f64,
    pub dist_lung_wall_mm: Option<f64>,
    pub dist_mediastinum_mm: Option<f64>,
    pub dist_diaphragm_mm: Option<f64>,
    pub invades_lung_wall: bool,
    pub invades_mediastinum: bool,
    pub invades_diaphragm: bool,
    pub surrounded_by_lung: bool,
    pub stage: TStage,
    pub fired_rule: String,
}

type Px = (usize, usize);

struct Grid<'a> {
    rows: usize,
    cols: usize,
    on: &'a dyn Fn(usize, usize) -> bool,
}

/// 8-connected components in order of first pixel in raster scan.
fn components(g: &Grid) -> Vec<Vec<Px>> {
    let mut seen = vec![false; g.rows * g.cols];
    let mut out = Vec::new();
    for r in 0..g.rows {
        for c in 0..g.cols {
            if !(g.on)(r, c) || seen[r * g.cols + c] {
                continue;
            }
            seen[r * g.cols + c] = true;
            let mut comp = vec![];
            let mut q = VecDeque::from([(r, c)]);
            while let Some((y, x)) = q.pop_front() {
                comp.push((y, x));
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (ny, nx) = (y as isize + dy, x as isize + dx);
                        if ny < 0 || nx < 0 || ny >= g.rows as isize || nx >= g.cols as isize {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if (g.on)(ny, nx) && !seen[ny * g.cols + nx] {
                            seen[ny * g.cols + nx] = true;
                            q.push_back((ny, nx));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Largest first; equal sizes keep discovery order.
fn by_size(mut comps: Vec<Vec<Px>>) -> Vec<Vec<Px>> {
    let mut idx: Vec<usize> = (0..comps.len()).collect();
    idx.sort_by_key(|&i| std::cmp::Reverse(comps[i].len()));
    idx.iter().map(|&i| std::mem::take(&mut comps[i])).collect()
}

fn d2(a: Px, b: Px, s: Spacing) -> f64 {
    let dr = (a.0 as i64 - b.0 as i64) as f64 * s.row;
    let dc = (a.1 as i64 - b.1 as i64) as f64 * s.col;
    dr * dr + dc * dc
}

/// Smallest pairwise distance; 0 if the sets share a pixel.
fn min_dist(a: &[Px], b: &[Px], s: Spacing) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &p in a {
        for &q in b {
            let d = d2(p, q, s);
            if best.is_none_or(|m| d < m) {
                best = Some(d);
            }
        }
    }
    best.map(f64::sqrt)
}

/// Pixels with a 4-neighbour outside the set or off the raster.
fn edge_pixels(set: &[Px], rows: usize, cols: usize) -> Vec<Px> {
    let mut on = vec![false; rows * cols];
    for &(r, c) in set {
        on[r * cols + c] = true;
    }
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && r < rows as isize && c < cols as isize && on[r as usize * cols + c as usize];
    set.iter()
        .copied()
        .filter(|&(r, c)| {
            let (r, c) = (r as isize, c as isize);
            !(inside(r - 1, c) && inside(r + 1, c) && inside(r, c - 1) && inside(r, c + 1))
        })
        .collect()
}

/// Pixels of `comp` 4-adjacent to the background reachable from outside the
/// raster through 4-connected non-component pixels.
fn outer_border(comp: &[Px], rows: usize, cols: usize) -> Vec<Px> {
    let (pr, pc) = (rows + 2, cols + 2);
    let mut fg = vec![false; pr * pc];
    for &(r, c) in comp {
        fg[(r + 1) * pc + c + 1] = true;
    }
    let mut outside = vec![false; pr * pc];
    outside[0] = true;
    let mut q = VecDeque::from([(0usize, 0usize)]);
    while let Some((r, c)) = q.pop_front() {
        let mut visit = |nr: usize, nc: usize| {
            let i = nr * pc + nc;
            if !fg[i] && !outside[i] {
                outside[i] = true;
                q.push_back((nr, nc));
            }
        };
        if r > 0 {
            visit(r - 1, c);
        }
        if r + 1 < pr {
            visit(r + 1, c);
        }
        if c > 0 {
            visit(r, c - 1);
        }
        if c + 1 < pc {
            visit(r, c + 1);
        }
    }
    comp.iter()
        .copied()
        .filter(|&(r, c)| {
            let (r, c) = (r + 1, c + 1);
            outside[(r - 1) * pc + c] || outside[(r + 1) * pc + c] || outside[r * pc + c - 1] || outside[r * pc + c + 1]
        })
        .collect()
}

/// Lowest pixel per column of each of the two largest components, kept when
/// within the band above that component's lowest row.
fn diaphragm_band(lung: &BinaryMask, fraction: f64) -> Vec<Px> {
    let g = Grid { rows: lung.rows(), cols: lung.cols(), on: &|r, c| lung.get(r, c) };
    let mut out = vec![];
    for comp in by_size(components(&g)).iter().take(2) {
        let top = comp.iter().map(|p| p.0).min().unwrap();
        let bottom = comp.iter().map(|p| p.0).max().unwrap();
        let height = bottom - top + 1;
        let band = ((fraction * height as f64 + 0.5).floor() as usize).max(1);
        let mut lowest = vec![None; lung.cols()];
        for &(r, c) in comp {
            if lowest[c].is_none_or(|l| r > l) {
                lowest[c] = Some(r);
            }
        }
        for (c, low) in lowest.iter().enumerate() {
            if let Some(r) = *low {
                if r + band >= bottom + 1 {
                    out.push((r, c));
                }
            }
        }
    }
    out
}

struct SliceTruth {
    diameter: f64,
    lung_wall: Option<f64>,
    mediastinum: Option<f64>,
    diaphragm: Option<f64>,
    surrounded: Option<bool>,
}

fn slice_truth(
    masks: &crate::ingest::SliceMasks,
    s: Spacing,
    diaphragm: DiaphragmParams,
    containment: ContainmentParams,
) -> SliceTruth {
    let tumor_all = masks.present(Structure::Tumor).expect("tumor slice");
    let (rows, cols) = (tumor_all.rows(), tumor_all.cols());
    let g = Grid { rows, cols, on: &|r, c| tumor_all.get(r, c) };
    let tumor = by_size(components(&g)).swap_remove(0);
    let mut in_tumor = vec![false; rows * cols];
    for &(r, c) in &tumor {
        in_tumor[r * cols + c] = true;
    }
    let t_edge = edge_pixels(&tumor, rows, cols);
    let mut far = 0.0f64;
    for &p in &t_edge {
        for &q in &t_edge {
            far = far.max(d2(p, q, s));
        }
    }
    let mut t = SliceTruth { diameter: far.sqrt(), lung_wall: None, mediastinum: None, diaphragm: None, surrounded: None };

    if let Some(lung) = masks.present(Structure::Lung) {
        let in_region = |r: usize, c: usize| lung.get(r, c) || in_tumor[r * cols + c];
        let g = Grid { rows, cols, on: &in_region };
        let mut wall = vec![];
        for comp in components(&g) {
            if comp.iter().any(|&(r, c)| lung.get(r, c)) {
                wall.extend(outer_border(&comp, rows, cols));
            }
        }
        t.lung_wall = if wall.iter().any(|&(r, c)| in_tumor[r * cols + c]) {
            Some(0.0)
        } else {
            min_dist(&t_edge, &wall, s)
        };

        let region: Vec<Px> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).filter(|&(r, c)| in_region(r, c)).collect();
        let rim = edge_pixels(&region, rows, cols);
        let clearance = if rim.iter().any(|&(r, c)| in_tumor[r * cols + c]) {
            0.0
        } else {
            min_dist(&t_edge, &rim, s).expect("region has a rim")
        };
        t.surrounded = Some(clearance > containment.margin_mm);

        let band = diaphragm_band(lung, diaphragm.band_fraction);
        t.diaphragm = if band.iter().any(|&(r, c)| in_tumor[r * cols + c]) {
            Some(0.0)
        } else {
            min_dist(&tumor, &band, s)
        };
    }
    if let Some(med) = masks.present(Structure::Mediastinum) {
        let px: Vec<Px> = med.foreground().map(|p| (p.row, p.col)).collect();
        t.mediastinum = if px.iter().any(|&(r, c)| in_tumor[r * cols + c]) {
            Some(0.0)
        } else {
            min_dist(&t_edge, &edge_pixels(&px, rows, cols), s)
        };
    }
    t
}

/// Ground truth for a study under the given rules.
pub fn oracle_truth(
    study: &Study,
    rules: &StagingRules,
    diaphragm: DiaphragmParams,
    containment: ContainmentParams,
) -> Result<PhantomTruth> {
    rules.validate()?;
    let s = study.spacing();
    let per_slice: Vec<SliceTruth> = study
        .slices()
        .iter()
        .filter(|m| m.has_tumor())
        .map(|m| slice_truth(m, s, diaphragm, containment))
        .collect();
    if per_slice.is_empty() {
        return Err(Error::NoTumor);
    }
    let min_of = |f: fn(&SliceTruth) -> Option<f64>| {
        per_slice.iter().filter_map(f).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
    };
    let in_plane = per_slice.iter().map(|t| t.diameter).fold(0.0, f64::max);
    let depth = per_slice.len() as f64 * study.slice_thickness_mm();
    let size = in_plane.max(depth);
    let lung_wall = min_of(|t| t.lung_wall);
    let mediastinum = min_of(|t| t.mediastinum);
    let diaphragm_d = min_of(|t| t.diaphragm);
    let limit = rules.invasion_threshold_mm;
    let invades = |d: Option<f64>| matches!(d, Some(d) if d <= limit);
    let assessed: Vec<bool> = per_slice.iter().filter_map(|t| t.surrounded).collect();
    let surrounded = !assessed.is_empty() && !assessed.contains(&false);

    let mut truth = PhantomTruth {
        size_mm: size,
        in_plane_max_mm: in_plane,
        depth_mm: depth,
        dist_lung_wall_mm: lung_wall,
        dist_mediastinum_mm: mediastinum,
        dist_diaphragm_mm: diaphragm_d,
        invades_lung_wall: invades(lung_wall),
        invades_mediastinum: invades(mediastinum),
        invades_diaphragm: invades(diaphragm_d),
        surrounded_by_lung: surrounded,
        stage: TStage::T1,
        fired_rule: String::new(),
    };
    let (stage, rule) = apply_rules(&truth, rules);
    truth.stage = stage;
    truth.fired_rule = rule;
    Ok(truth)
}

/// The rule text, applied literally and in order.
fn apply_rules(t: &PhantomTruth, rules: &StagingRules) -> (TStage, String) {
    for s in &rules.invading_structures {
        let (name, hit) = match s {
            InvadedStructure::Mediastinum => ("mediastinum", t.invades_mediastinum),
            InvadedStructure::Diaphragm => ("diaphragm", t.invades_diaphragm),
            InvadedStructure::LungWall => ("lung_wall", t.invades_lung_wall),
        };
        if hit {
            return (TStage::T4, format!("invasion:{name}"));
        }
    }
    if t.size_mm > rules.t3_max_mm {
        (TStage::T4, "size_gt_t3_max".into())
    } else if t.size_mm > rules.t2_max_mm {
        (TStage::T3, "size_gt_t2_max".into())
    } else if t.size_mm > rules.t1_max_mm {
        (TStage::T2, "size_gt_t1_max".into())
    } else if t.surrounded_by_lung {
        (TStage::T1, "small_surrounded".into())
    } else {
        (rules.small_unsurrounded_stage, "small_unsurrounded".into())
    }
}

/// Oracle stage with default diaphragm and containment parameters.
pub fn oracle_stage(study: &Study, rules: &StagingRules) -> Result<TStage> {
    oracle_truth(study, rules, DiaphragmParams::default(), ContainmentParams::default()).map(|t| t.stage)
}
