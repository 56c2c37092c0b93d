//! Tumor size and distances to the lung wall, mediastinum and estimated
//! diaphragm, per slice and aggregated over a study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anatomy::{clearance_to_lung_boundary, estimate_diaphragm, ContainmentParams, DiaphragmParams};
use crate::error::{Error, Result};
use crate::geometry::{closest_pair, connected_components, contour_of, max_diameter_mm, min_distance_mm};
use crate::ingest::{BinaryMask, Pixel, SliceMasks, Structure, Study};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureParams {
    pub diaphragm: DiaphragmParams,
    pub containment: ContainmentParams,
    /// A distance at or below this counts as invasion.
    pub invasion_threshold_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeasurements {
    pub slice_index: usize,
    pub tumor_diameter_mm: Option<f64>,
    pub dist_lung_wall_mm: Option<f64>,
    pub dist_mediastinum_mm: Option<f64>,
    pub dist_diaphragm_mm: Option<f64>,
    pub surrounded_by_lung: Option<bool>,
    /// Tumor components on this slice, including the measured one.
    pub tumor_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorProperties {
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
    /// False when no tumor-bearing slice had a lung mask, in which case
    /// `surrounded_by_lung` is false by definition.
    pub lung_mask_available: bool,
    pub n_tumor_slices: usize,
    /// Tumor components other than the largest, summed over slices. They do
    /// not enter any measurement.
    pub satellite_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_index: Option<usize>,
    pub message: String,
}

impl Warning {
    fn study(message: impl Into<String>) -> Self {
        Warning {
            slice_index: None,
            message: message.into(),
        }
    }

    fn slice(index: usize, message: impl Into<String>) -> Self {
        Warning {
            slice_index: Some(index),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeasurements {
    pub properties: TumorProperties,
    pub slices: Vec<SliceMeasurements>,
    pub warnings: Vec<Warning>,
}

/// Outer-contour pixels of the components of `region` that contain lung.
fn lung_wall_points(region: &BinaryMask, lung: &BinaryMask) -> Vec<Pixel> {
    connected_components(region)
        .iter()
        .filter(|c| c.pixels.iter().any(|p| lung.get(p.row, p.col)))
        .flat_map(|c| contour_of(region, c).points)
        .collect()
}

fn distance_to_points(tumor: &BinaryMask, points: &[Pixel]) -> Option<f64> {
    if points.iter().any(|p| tumor.get(p.row, p.col)) {
        return Some(0.0);
    }
    let spacing = tumor.spacing();
    closest_pair(&tumor.boundary_pixels(), points, spacing).map(|(a, b)| a.distance_mm(b, spacing))
}

/// Measures one slice. The tumor is its largest component; the lung wall is
/// the outer border of `lung ∪ tumor`; the diaphragm is estimated from the
/// lung mask. Structures without a non-empty mask give absent fields.
pub fn measure_slice(index: usize, masks: &SliceMasks, params: &MeasureParams) -> Result<SliceMeasurements> {
    let tumor_all = masks.present(Structure::Tumor).ok_or(Error::NoTumor)?;
    let comps = connected_components(tumor_all);
    let main = &comps[0];
    let tumor = main.to_mask(tumor_all.dims(), tumor_all.spacing());
    let diameter = max_diameter_mm(&contour_of(&tumor, main), tumor.spacing());

    let mut m = SliceMeasurements {
        slice_index: index,
        tumor_diameter_mm: Some(diameter),
        dist_lung_wall_mm: None,
        dist_mediastinum_mm: None,
        dist_diaphragm_mm: None,
        surrounded_by_lung: None,
        tumor_components: comps.len(),
    };

    if let Some(lung) = masks.present(Structure::Lung) {
        let region = lung.union(&tumor)?;
        m.dist_lung_wall_mm = distance_to_points(&tumor, &lung_wall_points(&region, lung));
        let clearance = clearance_to_lung_boundary(&tumor, lung)?;
        m.surrounded_by_lung = Some(clearance > params.containment.margin_mm);
        let diaphragm = estimate_diaphragm(lung, params.diaphragm)?;
        m.dist_diaphragm_mm = Some(min_distance_mm(&tumor, &diaphragm)?);
    }
    if let Some(med) = masks.present(Structure::Mediastinum) {
        m.dist_mediastinum_mm = Some(min_distance_mm(&tumor, med)?);
    }
    Ok(m)
}

/// Through-plane extent: number of tumor-bearing slices times the slice
/// thickness. Slices need not be contiguous.
pub fn tumor_depth_mm(study: &Study) -> f64 {
    study.tumor_slices().len() as f64 * study.slice_thickness_mm()
}

fn min_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.flatten().fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
}

pub fn measure_study(study: &Study, params: &MeasureParams) -> Result<StudyMeasurements> {
    params.diaphragm.validate()?;
    params.containment.validate()?;
    if !(params.invasion_threshold_mm >= 0.0) {
        return Err(Error::validation("invasion_threshold_mm", "must be >= 0"));
    }
    let tumor_slices = study.tumor_slices();
    if tumor_slices.is_empty() {
        return Err(Error::NoTumor);
    }
    let slices = tumor_slices
        .par_iter()
        .map(|&i| measure_slice(i, &study.slices()[i], params).map_err(|e| e.at_slice(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    for (structure, what) in [
        (Structure::Lung, "lung wall, diaphragm and containment"),
        (Structure::Mediastinum, "mediastinum"),
    ] {
        let missing: Vec<usize> = tumor_slices
            .iter()
            .copied()
            .filter(|&i| study.slices()[i].present(structure).is_none())
            .collect();
        if missing.len() == tumor_slices.len() {
            warnings.push(Warning::study(format!(
                "no {} mask on any tumor-bearing slice; {what} not assessed, invasion flags default to false",
                structure.name()
            )));
        } else {
            for i in missing {
                warnings.push(Warning::slice(
                    i,
                    format!("{} mask absent; {what} not measured on this slice", structure.name()),
                ));
            }
        }
    }
    for s in slices.iter().filter(|s| s.tumor_components > 1) {
        warnings.push(Warning::slice(
            s.slice_index,
            format!(
                "{} satellite tumor component(s) ignored; the largest component is measured",
                s.tumor_components - 1
            ),
        ));
    }

    let depth = tumor_depth_mm(study);
    let in_plane = slices
        .iter()
        .filter_map(|s| s.tumor_diameter_mm)
        .fold(0.0f64, f64::max);
    let dist_lung_wall = min_opt(slices.iter().map(|s| s.dist_lung_wall_mm));
    let dist_med = min_opt(slices.iter().map(|s| s.dist_mediastinum_mm));
    let dist_dia = min_opt(slices.iter().map(|s| s.dist_diaphragm_mm));
    let assessed: Vec<bool> = slices.iter().filter_map(|s| s.surrounded_by_lung).collect();
    let threshold = params.invasion_threshold_mm;
    let invades = |d: Option<f64>| d.is_some_and(|d| d <= threshold);

    let properties = TumorProperties {
        size_mm: in_plane.max(depth),
        in_plane_max_mm: in_plane,
        depth_mm: depth,
        dist_lung_wall_mm: dist_lung_wall,
        dist_mediastinum_mm: dist_med,
        dist_diaphragm_mm: dist_dia,
        invades_lung_wall: invades(dist_lung_wall),
        invades_mediastinum: invades(dist_med),
        invades_diaphragm: invades(dist_dia),
        surrounded_by_lung: !assessed.is_empty() && assessed.iter().all(|&s| s),
        lung_mask_available: !assessed.is_empty(),
        n_tumor_slices: tumor_slices.len(),
        satellite_components: slices.iter().map(|s| s.tumor_components - 1).sum(),
    };
    Ok(StudyMeasurements {
        properties,
        slices,
        warnings,
    })
}

pub fn extract_properties(study: &Study, params: &MeasureParams) -> Result<TumorProperties> {
    measure_study(study, params).map(|m| m.properties)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Dims, SliceEntry, Spacing, StudyManifest};

    fn manifest(n: usize, dims: Dims, spacing: Spacing, thickness: f64) -> StudyManifest {
        StudyManifest {
            study_id: "t".into(),
            pixel_spacing_mm: spacing,
            slice_thickness_mm: thickness,
            source_dims: dims,
            slices: (0..n).map(SliceEntry::empty).collect(),
            base_dir: Default::default(),
        }
    }

    fn disk(dims: Dims, s: Spacing, cr: f64, cc: f64, rad: f64) -> BinaryMask {
        BinaryMask::from_fn(dims, s, |r, c| {
            let (y, x) = (r as f64 - cr, c as f64 - cc);
            y * y + x * x <= rad * rad
        })
    }

    fn rect(dims: Dims, s: Spacing, r0: usize, r1: usize, c0: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(dims, s, |r, c| (r0..=r1).contains(&r) && (c0..=c1).contains(&c))
    }

    #[test]
    fn tumor_only_slice() {
        let dims = Dims::new(20, 20);
        let masks = SliceMasks {
            tumor: Some(rect(dims, Spacing::UNIT, 2, 11, 2, 11)),
            ..Default::default()
        };
        let m = measure_slice(0, &masks, &MeasureParams::default()).unwrap();
        assert!((m.tumor_diameter_mm.unwrap() - 9.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.dist_lung_wall_mm, None);
        assert_eq!(m.dist_mediastinum_mm, None);
        assert_eq!(m.dist_diaphragm_mm, None);
        assert_eq!(m.surrounded_by_lung, None);
    }

    #[test]
    fn overlapping_mediastinum_is_zero() {
        let dims = Dims::new(20, 20);
        let masks = SliceMasks {
            tumor: Some(rect(dims, Spacing::UNIT, 5, 8, 5, 8)),
            mediastinum: Some(rect(dims, Spacing::UNIT, 0, 19, 8, 12)),
            ..Default::default()
        };
        let m = measure_slice(0, &masks, &MeasureParams::default()).unwrap();
        assert_eq!(m.dist_mediastinum_mm, Some(0.0));
    }

    /// Tumor six pixels inside the lung's left wall, checked against an
    /// exhaustive scan over tumor pixels and lung-wall pixels.
    #[test]
    fn lung_wall_distance_matches_brute_force() {
        let dims = Dims::new(40, 40);
        let s = Spacing::UNIT;
        let lung = rect(dims, s, 5, 34, 5, 34);
        let tumor = rect(dims, s, 15, 18, 11, 14);
        let masks = SliceMasks {
            lung: Some(lung.clone()),
            tumor: Some(tumor.clone()),
            ..Default::default()
        };
        let m = measure_slice(0, &masks, &MeasureParams::default()).unwrap();
        let wall: Vec<Pixel> = lung
            .foreground()
            .filter(|p| p.row == 5 || p.row == 34 || p.col == 5 || p.col == 34)
            .collect();
        let brute = tumor
            .foreground()
            .flat_map(|a| wall.iter().map(move |&b| a.distance_mm(b, s)))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(brute, 6.0);
        assert_eq!(m.dist_lung_wall_mm, Some(6.0));
        assert_eq!(m.surrounded_by_lung, Some(true));
        // diaphragm band is the bottom row (34): rows 18 -> 34
        assert_eq!(m.dist_diaphragm_mm, Some(16.0));
    }

    #[test]
    fn satellites_do_not_change_measurement() {
        let dims = Dims::new(30, 30);
        let s = Spacing::new(0.8, 0.8);
        let big = disk(dims, s, 15.0, 15.0, 5.0);
        let mut with_sat = big.clone();
        with_sat.set(1, 1, true);
        let a = measure_slice(0, &SliceMasks { tumor: Some(big), ..Default::default() }, &MeasureParams::default()).unwrap();
        let b = measure_slice(0, &SliceMasks { tumor: Some(with_sat), ..Default::default() }, &MeasureParams::default()).unwrap();
        assert_eq!(a.tumor_diameter_mm, b.tumor_diameter_mm);
        assert_eq!(b.tumor_components, 2);
    }

    fn study_with_tumor_on(slices: &[usize], n: usize, thickness: f64) -> Study {
        let dims = Dims::new(16, 16);
        let s = Spacing::UNIT;
        let masks = (0..n)
            .map(|i| SliceMasks {
                tumor: slices.contains(&i).then(|| rect(dims, s, 4, 6, 4, 6)),
                ..Default::default()
            })
            .collect();
        Study::new(manifest(n, dims, s, thickness), masks).unwrap()
    }

    #[test]
    fn depth_counts_slices_literally() {
        assert_eq!(tumor_depth_mm(&study_with_tumor_on(&(0..12).collect::<Vec<_>>(), 12, 2.5)), 30.0);
        assert_eq!(tumor_depth_mm(&study_with_tumor_on(&[], 5, 2.5)), 0.0);
        assert_eq!(tumor_depth_mm(&study_with_tumor_on(&[2, 3, 4, 9], 10, 1.0)), 4.0);
    }

    #[test]
    fn no_tumor_is_an_error() {
        let study = study_with_tumor_on(&[], 3, 1.0);
        assert!(matches!(extract_properties(&study, &MeasureParams::default()), Err(Error::NoTumor)));
    }

    #[test]
    fn size_is_max_of_in_plane_and_depth() {
        // 3x3 tumor: in-plane 2*sqrt(2) ≈ 2.83 mm; 4 slices * 1 mm = 4 mm
        let p = extract_properties(&study_with_tumor_on(&[2, 3, 4, 9], 10, 1.0), &MeasureParams::default()).unwrap();
        assert_eq!(p.depth_mm, 4.0);
        assert_eq!(p.size_mm, 4.0);
        assert!(p.size_mm >= p.in_plane_max_mm);
        assert!(!p.lung_mask_available && !p.surrounded_by_lung);
        assert!(!p.invades_mediastinum && !p.invades_diaphragm);
    }

    #[test]
    fn surrounded_and_min_aggregation() {
        let dims = Dims::new(40, 40);
        let s = Spacing::UNIT;
        let lung = rect(dims, s, 2, 37, 2, 37);
        let near = rect(dims, s, 10, 12, 6, 8); // 4 px from the left wall
        let far = rect(dims, s, 15, 20, 15, 20);
        let masks = vec![
            SliceMasks { lung: Some(lung.clone()), tumor: Some(far), ..Default::default() },
            SliceMasks { lung: Some(lung.clone()), tumor: Some(near), ..Default::default() },
            SliceMasks { lung: Some(lung), ..Default::default() },
        ];
        let study = Study::new(manifest(3, dims, s, 1.0), masks).unwrap();
        let m = measure_study(&study, &MeasureParams::default()).unwrap();
        assert_eq!(m.properties.dist_lung_wall_mm, Some(4.0));
        assert!(m.properties.surrounded_by_lung);
        assert_eq!(m.slices.len(), 2);
        // mediastinum missing everywhere -> one study-level warning
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].message.contains("mediastinum"));
    }

    #[test]
    fn spacing_scale_equivariance() {
        let dims = Dims::new(40, 40);
        let build = |k: f64| {
            let s = Spacing::new(0.7 * k, 0.9 * k);
            let masks = vec![SliceMasks {
                lung: Some(disk(dims, s, 20.0, 20.0, 17.0)),
                tumor: Some(disk(dims, s, 18.0, 22.0, 4.0)),
                mediastinum: Some(rect(dims, s, 0, 39, 37, 39)),
            }];
            Study::new(manifest(1, dims, s, 2.5 * k), masks).unwrap()
        };
        let a = extract_properties(&build(1.0), &MeasureParams::default()).unwrap();
        let b = extract_properties(&build(2.0), &MeasureParams::default()).unwrap();
        assert_eq!(b.size_mm, 2.0 * a.size_mm);
        assert_eq!(b.in_plane_max_mm, 2.0 * a.in_plane_max_mm);
        assert_eq!(b.dist_lung_wall_mm.unwrap(), 2.0 * a.dist_lung_wall_mm.unwrap());
        assert_eq!(b.dist_mediastinum_mm.unwrap(), 2.0 * a.dist_mediastinum_mm.unwrap());
        assert_eq!(b.dist_diaphragm_mm.unwrap(), 2.0 * a.dist_diaphragm_mm.unwrap());
    }

    #[test]
    fn adding_a_tumor_slice_is_monotone() {
        let dims = Dims::new(40, 40);
        let s = Spacing::UNIT;
        let lung = rect(dims, s, 2, 37, 2, 37);
        let mk = |extra: bool| {
            let mut masks = vec![SliceMasks { lung: Some(lung.clone()), tumor: Some(rect(dims, s, 15, 20, 15, 20)), ..Default::default() }];
            masks.push(SliceMasks {
                lung: Some(lung.clone()),
                tumor: extra.then(|| rect(dims, s, 3, 5, 20, 30)),
                ..Default::default()
            });
            Study::new(manifest(2, dims, s, 3.0), masks).unwrap()
        };
        let a = extract_properties(&mk(false), &MeasureParams::default()).unwrap();
        let b = extract_properties(&mk(true), &MeasureParams::default()).unwrap();
        assert!(b.size_mm >= a.size_mm);
        assert!(b.dist_lung_wall_mm.unwrap() <= a.dist_lung_wall_mm.unwrap());
        assert!(b.dist_diaphragm_mm.unwrap() <= a.dist_diaphragm_mm.unwrap());
    }
}
