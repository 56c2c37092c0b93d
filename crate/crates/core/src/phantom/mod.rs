//! Synthetic studies with known ground truth.
//!
//! A [`PhantomSpec`] describes elliptical lungs, an optional mediastinum
//! strip and an ellipsoidal tumor spanning a range of slices. Ground truth
//! comes from [`oracle`], which recomputes every quantity by exhaustive
//! enumeration.

pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::{ContainmentParams, DiaphragmParams};
use crate::error::{Error, Result};
use crate::ingest::{save_manifest, save_mask, BinaryMask, Dims, SliceEntry, SliceMasks, Spacing, Study, StudyManifest};
use crate::preprocess::{save_hu_png, HuGrid};
use crate::staging::StagingRules;

pub use oracle::{oracle_stage, oracle_truth, PhantomTruth};

/// Axis-aligned ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// (row, col)
    pub center: [f64; 2],
    /// (row, col) semi-axes
    pub radii: [f64; 2],
}

impl Ellipse {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        let y = (r as f64 - self.center[0]) / self.radii[0];
        let x = (c as f64 - self.center[1]) / self.radii[1];
        y * y + x * x <= 1.0
    }

    /// Distance from the center to the ellipse along unit direction `(dy, dx)`.
    fn reach(&self, dy: f64, dx: f64) -> f64 {
        1.0 / ((dy / self.radii[0]).powi(2) + (dx / self.radii[1]).powi(2)).sqrt()
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl PixelRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.top..=self.bottom).contains(&r) && (self.left..=self.right).contains(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumorSpec {
    /// (row, col) in pixels.
    pub center: [f64; 2],
    /// (row, col) semi-axes in mm.
    pub radii_mm: [f64; 2],
    pub first_slice: usize,
    pub last_slice: usize,
    /// Relative amplitude of the angular radius perturbation, in [0, 0.5).
    #[serde(default)]
    pub irregularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub study_id: String,
    pub dims: Dims,
    pub pixel_spacing_mm: Spacing,
    pub slice_thickness_mm: f64,
    pub n_slices: usize,
    pub lungs: Vec<Ellipse>,
    #[serde(default)]
    pub mediastinum: Option<PixelRect>,
    pub tumor: TumorSpec,
    /// Removes tumor pixels from the lung mask.
    #[serde(default)]
    pub carve_tumor_from_lung: bool,
    /// Slices written without a lung mask.
    #[serde(default)]
    pub omit_lung_on: Vec<usize>,
    #[serde(default)]
    pub omit_mediastinum_on: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::GeometryInfeasible(m));
        if self.dims.is_empty() || self.n_slices == 0 {
            return bad("dims and n_slices must be non-zero".into());
        }
        if !self.pixel_spacing_mm.is_valid() || !(self.slice_thickness_mm > 0.0) {
            return bad("spacing and thickness must be > 0".into());
        }
        let t = &self.tumor;
        if t.first_slice > t.last_slice || t.last_slice >= self.n_slices {
            return bad(format!(
                "tumor slices {}..={} outside 0..{}",
                t.first_slice, t.last_slice, self.n_slices
            ));
        }
        if !(0.0..0.5).contains(&t.irregularity) || !(t.radii_mm[0] > 0.0 && t.radii_mm[1] > 0.0) {
            return bad("tumor radii must be > 0 and irregularity in [0, 0.5)".into());
        }
        let s = self.pixel_spacing_mm;
        let reach = [
            t.radii_mm[0] * (1.0 + t.irregularity) / s.row,
            t.radii_mm[1] * (1.0 + t.irregularity) / s.col,
        ];
        let limits = [self.dims.rows as f64 - 1.0, self.dims.cols as f64 - 1.0];
        for k in 0..2 {
            if t.center[k] - reach[k] < 0.0 || t.center[k] + reach[k] > limits[k] {
                return bad(format!("tumor extends outside the {}x{} raster", self.dims.rows, self.dims.cols));
            }
        }
        if self.lungs.iter().any(|l| !(l.radii[0] > 0.0 && l.radii[1] > 0.0)) {
            return bad("lung radii must be > 0".into());
        }
        if let Some(m) = self.mediastinum {
            if m.top > m.bottom || m.left > m.right || m.bottom >= self.dims.rows || m.right >= self.dims.cols {
                return bad("mediastinum rectangle outside the raster".into());
            }
        }
        Ok(())
    }

    /// Two lungs, a central mediastinum and a round tumor in the right lung
    /// over the middle third of the slices.
    pub fn standard(dims: Dims, n_slices: usize, spacing: Spacing, tumor_radius_mm: f64) -> PhantomSpec {
        let (h, w) = (dims.rows as f64, dims.cols as f64);
        let right = Ellipse { center: [h * 0.5, w * 0.72], radii: [h * 0.36, w * 0.2] };
        PhantomSpec {
            study_id: format!("standard-{}x{}x{}", dims.rows, dims.cols, n_slices),
            dims,
            pixel_spacing_mm: spacing,
            slice_thickness_mm: 2.5,
            n_slices,
            lungs: vec![Ellipse { center: [h * 0.5, w * 0.28], radii: [h * 0.36, w * 0.2] }, right],
            mediastinum: Some(PixelRect {
                top: (h * 0.25) as usize,
                left: (w * 0.46) as usize,
                bottom: (h * 0.8) as usize,
                right: (w * 0.54) as usize,
            }),
            tumor: TumorSpec {
                center: [h * 0.45, w * 0.72],
                radii_mm: [tumor_radius_mm, tumor_radius_mm],
                first_slice: n_slices / 3,
                last_slice: (2 * n_slices / 3).max(n_slices / 3),
                irregularity: 0.0,
            },
            carve_tumor_from_lung: false,
            omit_lung_on: vec![],
            omit_mediastinum_on: vec![],
            seed: 0,
        }
    }

    /// A random small phantom. Sizes straddle the staging thresholds and
    /// placements probe contact with each structure.
    pub fn random(seed: u64) -> PhantomSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims::new(rng.random_range(64..=96), rng.random_range(64..=96));
        let (h, w) = (dims.rows as f64, dims.cols as f64);
        let mut sr = rng.random_range(12..=28) as f64 * 0.05;
        let mut sc = if rng.random_bool(0.7) { sr } else { rng.random_range(12..=28) as f64 * 0.05 };
        let thickness = *[1.0, 1.25, 2.0, 2.5, 3.0, 5.0].choose(&mut rng).unwrap();
        let irregularity = if rng.random_bool(0.6) { 0.0 } else { rng.random_range(0.02..0.25) };

        // in-plane size near a threshold, or anywhere below the largest
        let thresholds = [30.0, 50.0, 70.0];
        let depth_driven = rng.random_bool(0.25);
        let diameter = if depth_driven || rng.random_bool(0.25) {
            rng.random_range(6.0..60.0)
        } else {
            let t = *thresholds.choose(&mut rng).unwrap();
            t + rng.random_range(-2..=2) as f64 * sr.max(sc)
        };
        let aspect = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.55..1.0) };
        let mut radii_mm = [diameter / 2.0, diameter / 2.0 * aspect];
        if rng.random_bool(0.5) {
            radii_mm.swap(0, 1);
        }
        // grow the pixels until the tumor fits with a small margin
        let fit = ((2.0 * radii_mm[0] * (1.0 + irregularity) / sr) / (h - 4.0))
            .max((2.0 * radii_mm[1] * (1.0 + irregularity) / sc) / (w - 4.0));
        if fit > 1.0 {
            sr *= fit * 1.02;
            sc *= fit * 1.02;
        }
        let spacing = Spacing::new(sr, sc);

        let n_tumor = if depth_driven {
            let t = *thresholds.choose(&mut rng).unwrap();
            ((t / thickness).round() as i64 + rng.random_range(-1..=1)).max(1) as usize
        } else {
            rng.random_range(1..=8)
        };
        let n_slices = n_tumor + rng.random_range(0..=4);
        let first_slice = rng.random_range(0..=n_slices - n_tumor);

        let two_lungs = rng.random_bool(0.75);
        let lung_h = h * rng.random_range(0.30..0.46);
        let lungs = if two_lungs {
            let lw = w * rng.random_range(0.15..0.24);
            vec![
                Ellipse { center: [h * 0.5 + rng.random_range(-3.0..3.0), w * 0.27], radii: [lung_h, lw] },
                Ellipse {
                    center: [h * 0.5 + rng.random_range(-3.0..3.0), w * 0.73],
                    radii: [lung_h * rng.random_range(0.9..1.1), lw * rng.random_range(0.9..1.1)],
                },
            ]
        } else {
            vec![Ellipse { center: [h * 0.5, w * 0.5], radii: [lung_h, w * rng.random_range(0.25..0.45)] }]
        };
        let mediastinum = rng.random_bool(0.85).then(|| PixelRect {
            top: (h * rng.random_range(0.15..0.35)) as usize,
            left: (w * 0.46) as usize,
            bottom: (h * rng.random_range(0.7..0.9)) as usize,
            right: (w * 0.54) as usize,
        });

        // tumor reach in pixels along a unit pixel-space direction
        let reach = |dy: f64, dx: f64| {
            1.0 / ((dy * sr / radii_mm[0]).powi(2) + (dx * sc / radii_mm[1]).powi(2)).sqrt()
        };
        let lung = *lungs.choose(&mut rng).unwrap();
        let offset = rng.random_range(-2..=2) as f64;
        let mut center = match rng.random_range(0..20) {
            // deep in a lung
            0..=5 => [
                lung.center[0] + rng.random_range(-2.0..2.0),
                lung.center[1] + rng.random_range(-2.0..2.0),
            ],
            // against the lung wall at a random angle
            6..=9 => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (dy, dx) = (a.sin(), a.cos());
                let d = lung.reach(dy, dx) - reach(dy, dx) - offset;
                [lung.center[0] + d * dy, lung.center[1] + d * dx]
            }
            // on the lung floor
            10..=12 => {
                let d = lung.reach(1.0, 0.0) - reach(1.0, 0.0) - offset;
                [lung.center[0] + d, lung.center[1] + rng.random_range(-3.0..3.0)]
            }
            // beside the mediastinum
            13..=16 => match mediastinum {
                Some(m) => {
                    let row = rng.random_range(m.top as f64..=m.bottom as f64);
                    if lung.center[1] < m.left as f64 {
                        [row, m.left as f64 - reach(0.0, 1.0) - offset]
                    } else {
                        [row, m.right as f64 + reach(0.0, 1.0) + offset]
                    }
                }
                None => lung.center,
            },
            _ => [rng.random_range(0.0..h), rng.random_range(0.0..w)],
        };
        let ext = [
            radii_mm[0] * (1.0 + irregularity) / sr,
            radii_mm[1] * (1.0 + irregularity) / sc,
        ];
        let lim = [h - 1.0, w - 1.0];
        for k in 0..2 {
            center[k] = center[k].clamp(ext[k].ceil(), (lim[k] - ext[k]).floor().max(ext[k].ceil()));
        }

        let tumor_slices: Vec<usize> = (first_slice..first_slice + n_tumor).collect();
        let omit = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            match rng.random_range(0..10) {
                0 => tumor_slices.clone(),
                1 => tumor_slices.iter().copied().filter(|_| rng.random_bool(0.5)).collect(),
                _ => vec![],
            }
        };
        let omit_lung_on = omit(&mut rng);
        let omit_mediastinum_on = omit(&mut rng);

        PhantomSpec {
            study_id: format!("phantom-{seed}"),
            dims,
            pixel_spacing_mm: spacing,
            slice_thickness_mm: thickness,
            n_slices,
            lungs,
            mediastinum,
            tumor: TumorSpec {
                center,
                radii_mm,
                first_slice,
                last_slice: first_slice + n_tumor - 1,
                irregularity,
            },
            carve_tumor_from_lung: rng.random_bool(0.5),
            omit_lung_on,
            omit_mediastinum_on,
            seed,
        }
    }

    fn tumor_mask(&self, slice: usize) -> BinaryMask {
        let t = &self.tumor;
        let s = self.pixel_spacing_mm;
        let mut out = BinaryMask::new(self.dims, s);
        if slice < t.first_slice || slice > t.last_slice {
            return out;
        }
        let (p1, p2) = if t.irregularity > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (slice as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU))
        } else {
            (0.0, 0.0)
        };
        let ext = [
            (t.radii_mm[0] * (1.0 + t.irregularity) / s.row).ceil() as isize + 1,
            (t.radii_mm[1] * (1.0 + t.irregularity) / s.col).ceil() as isize + 1,
        ];
        let (cr, cc) = (t.center[0].round() as isize, t.center[1].round() as isize);
        for r in (cr - ext[0]).max(0)..=(cr + ext[0]).min(self.dims.rows as isize - 1) {
            for c in (cc - ext[1]).max(0)..=(cc + ext[1]).min(self.dims.cols as isize - 1) {
                let y = (r as f64 - t.center[0]) * s.row / t.radii_mm[0];
                let x = (c as f64 - t.center[1]) * s.col / t.radii_mm[1];
                let rho2 = y * y + x * x;
                let inside = if t.irregularity > 0.0 {
                    let th = y.atan2(x);
                    let bound = 1.0 + t.irregularity * (0.6 * (3.0 * th + p1).sin() + 0.4 * (5.0 * th + p2).sin());
                    rho2 <= bound * bound
                } else {
                    rho2 <= 1.0
                };
                if inside {
                    out.set(r as usize, c as usize, true);
                }
            }
        }
        out
    }

    fn slice_masks(&self, slice: usize) -> SliceMasks {
        let s = self.pixel_spacing_mm;
        let tumor = self.tumor_mask(slice);
        let lung = (!self.omit_lung_on.contains(&slice)).then(|| {
            BinaryMask::from_fn(self.dims, s, |r, c| {
                self.lungs.iter().any(|l| l.contains(r, c)) && !(self.carve_tumor_from_lung && tumor.get(r, c))
            })
        });
        let mediastinum = match self.mediastinum {
            Some(m) if !self.omit_mediastinum_on.contains(&slice) => {
                Some(BinaryMask::from_fn(self.dims, s, |r, c| m.contains(r, c)))
            }
            _ => None,
        };
        SliceMasks {
            lung,
            mediastinum,
            tumor: tumor.has_foreground().then_some(tumor),
        }
    }

    fn manifest(&self) -> StudyManifest {
        StudyManifest {
            study_id: self.study_id.clone(),
            pixel_spacing_mm: self.pixel_spacing_mm,
            slice_thickness_mm: self.slice_thickness_mm,
            source_dims: self.dims,
            slices: (0..self.n_slices).map(SliceEntry::empty).collect(),
            base_dir: PathBuf::new(),
        }
    }
}

/// Builds the in-memory study without computing ground truth.
pub fn generate_study(spec: &PhantomSpec) -> Result<Study> {
    spec.validate()?;
    let slices = (0..spec.n_slices).map(|i| spec.slice_masks(i)).collect();
    Study::new(spec.manifest(), slices)
}

/// Builds the study and its truth under default rules and parameters.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Study, PhantomTruth)> {
    let study = generate_study(spec)?;
    let truth = oracle_truth(
        &study,
        &StagingRules::default(),
        DiaphragmParams::default(),
        ContainmentParams::default(),
    )?;
    Ok((study, truth))
}

const HU_BACKGROUND: i32 = -1000;
const HU_LUNG: i32 = -850;
const HU_MEDIASTINUM: i32 = 40;
const HU_TUMOR: i32 = 30;

/// Flat-intensity CT slice: each pixel gets the HU of its structure.
pub fn synthetic_ct(masks: &SliceMasks, dims: Dims, spacing: Spacing) -> HuGrid {
    let values = (0..dims.len())
        .map(|i| {
            let (r, c) = (i / dims.cols, i % dims.cols);
            let on = |m: &Option<BinaryMask>| m.as_ref().is_some_and(|m| m.get(r, c));
            if on(&masks.tumor) {
                HU_TUMOR
            } else if on(&masks.mediastinum) {
                HU_MEDIASTINUM
            } else if on(&masks.lung) {
                HU_LUNG
            } else {
                HU_BACKGROUND
            }
        })
        .collect();
    HuGrid::new(dims, values, spacing).expect("sized from dims")
}

/// Writes masks, CT slices, `manifest.json`, `spec.json` and `truth.json`
/// (default rules) into `dir`. Returns the manifest path.
pub fn write_phantom(spec: &PhantomSpec, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let (study, truth) = generate_phantom(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = spec.manifest();
    for (i, masks) in study.slices().iter().enumerate() {
        let entry = &mut manifest.slices[i];
        let write = |m: &Option<BinaryMask>, name: &str| -> Result<Option<PathBuf>> {
            match m {
                Some(m) => {
                    let rel = PathBuf::from(format!("{name}_{i:03}.png"));
                    save_mask(m, dir.join(&rel))?;
                    Ok(Some(rel))
                }
                None => Ok(None),
            }
        };
        entry.lung_mask_path = write(&masks.lung, "lung")?;
        entry.mediastinum_mask_path = write(&masks.mediastinum, "mediastinum")?;
        entry.tumor_mask_path = write(&masks.tumor, "tumor")?;
        let ct = PathBuf::from(format!("ct_{i:03}.png"));
        save_hu_png(&synthetic_ct(masks, spec.dims, spec.pixel_spacing_mm), dir.join(&ct))?;
        entry.ct_image_path = Some(ct);
    }
    let manifest_path = dir.join("manifest.json");
    save_manifest(&manifest, &manifest_path)?;
    for (name, json) in [
        ("spec.json", serde_json::to_string_pretty(spec)),
        ("truth.json", serde_json::to_string_pretty(&truth)),
    ] {
        let p = dir.join(name);
        fs::write(&p, json.expect("serializable")).map_err(|e| Error::io(&p, e))?;
    }
    Ok(manifest_path)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}
