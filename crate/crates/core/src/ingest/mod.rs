//! Study manifests, mask rasters and in-memory study assembly.
//!
//! A manifest is a JSON document listing, per slice index, the PNG masks for
//! each anatomical structure. Paths are resolved relative to the manifest.

mod mask;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mask::{load_mask, probe_dims, save_mask, BinaryMask, Dims, Pixel, Spacing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub study_id: String,
    pub pixel_spacing_mm: Spacing,
    pub slice_thickness_mm: f64,
    pub source_dims: Dims,
    pub slices: Vec<SliceEntry>,
    /// Directory the relative slice paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub index: usize,
    #[serde(rename = "lung", default, skip_serializing_if = "Option::is_none")]
    pub lung_mask_path: Option<PathBuf>,
    #[serde(rename = "mediastinum", default, skip_serializing_if = "Option::is_none")]
    pub mediastinum_mask_path: Option<PathBuf>,
    #[serde(rename = "tumor", default, skip_serializing_if = "Option::is_none")]
    pub tumor_mask_path: Option<PathBuf>,
    #[serde(rename = "ct", default, skip_serializing_if = "Option::is_none")]
    pub ct_image_path: Option<PathBuf>,
}

impl SliceEntry {
    pub fn empty(index: usize) -> Self {
        SliceEntry {
            index,
            lung_mask_path: None,
            mediastinum_mask_path: None,
            tumor_mask_path: None,
            ct_image_path: None,
        }
    }

    pub fn mask_path(&self, kind: Structure) -> Option<&Path> {
        match kind {
            Structure::Lung => self.lung_mask_path.as_deref(),
            Structure::Mediastinum => self.mediastinum_mask_path.as_deref(),
            Structure::Tumor => self.tumor_mask_path.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Lung,
    Mediastinum,
    Tumor,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Lung, Structure::Mediastinum, Structure::Tumor];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Lung => "lung",
            Structure::Mediastinum => "mediastinum",
            Structure::Tumor => "tumor",
        }
    }
}

impl StudyManifest {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.base_dir.join(rel)
        }
    }

    /// Checks every structural invariant except raster dimensions; sorts
    /// slices by index.
    pub fn validate(&mut self) -> Result<()> {
        if !self.pixel_spacing_mm.is_valid() {
            return Err(Error::validation("pixel_spacing_mm", "components must be > 0"));
        }
        if !(self.slice_thickness_mm > 0.0 && self.slice_thickness_mm.is_finite()) {
            return Err(Error::validation("slice_thickness_mm", "must be > 0"));
        }
        if self.source_dims.is_empty() {
            return Err(Error::validation("source_dims", "rows and cols must be >= 1"));
        }
        if self.slices.is_empty() {
            return Err(Error::validation("slices", "at least one slice is required"));
        }
        self.slices.sort_by_key(|s| s.index);
        let mut seen = BTreeSet::new();
        for s in &self.slices {
            if !seen.insert(s.index) {
                return Err(Error::validation("slices", format!("duplicate index {}", s.index)));
            }
        }
        for (expected, s) in self.slices.iter().enumerate() {
            if s.index != expected {
                return Err(Error::validation(
                    "slices",
                    format!("indices must be contiguous from 0; missing {expected}"),
                ));
            }
        }
        Ok(())
    }

    fn check_raster_dims(&self) -> Result<()> {
        for s in &self.slices {
            let paths = Structure::ALL
                .iter()
                .filter_map(|&k| s.mask_path(k))
                .chain(s.ct_image_path.as_deref());
            for rel in paths {
                let dims = mask::probe_dims(&self.resolve(rel)).map_err(|e| e.at_slice(s.index))?;
                if dims != self.source_dims {
                    return Err(Error::validation(
                        format!("slices[{}]", s.index),
                        format!(
                            "{} is {}x{}, source_dims is {}x{}",
                            rel.display(),
                            dims.rows,
                            dims.cols,
                            self.source_dims.rows,
                            self.source_dims.cols
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a manifest, including the dimensions of every
/// referenced raster.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<StudyManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: StudyManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    manifest.check_raster_dims()?;
    Ok(manifest)
}

/// Masks for one slice. `None` means the structure was not supplied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SliceMasks {
    pub lung: Option<BinaryMask>,
    pub mediastinum: Option<BinaryMask>,
    pub tumor: Option<BinaryMask>,
}

impl SliceMasks {
    pub fn get(&self, kind: Structure) -> Option<&BinaryMask> {
        match kind {
            Structure::Lung => self.lung.as_ref(),
            Structure::Mediastinum => self.mediastinum.as_ref(),
            Structure::Tumor => self.tumor.as_ref(),
        }
    }

    fn slot(&mut self, kind: Structure) -> &mut Option<BinaryMask> {
        match kind {
            Structure::Lung => &mut self.lung,
            Structure::Mediastinum => &mut self.mediastinum,
            Structure::Tumor => &mut self.tumor,
        }
    }

    /// A mask that is present but entirely background counts as absent.
    pub fn present(&self, kind: Structure) -> Option<&BinaryMask> {
        self.get(kind).filter(|m| m.has_foreground())
    }

    pub fn has_tumor(&self) -> bool {
        self.present(Structure::Tumor).is_some()
    }
}

/// An immutable, validated stack of slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    manifest: StudyManifest,
    slices: Vec<SliceMasks>,
}

impl Study {
    /// Builds a study from in-memory masks, one `SliceMasks` per manifest slice.
    pub fn new(manifest: StudyManifest, slices: Vec<SliceMasks>) -> Result<Study> {
        let mut manifest = manifest;
        manifest.validate()?;
        if slices.len() != manifest.slices.len() {
            return Err(Error::LengthMismatch {
                left: manifest.slices.len(),
                right: slices.len(),
            });
        }
        for (i, s) in slices.iter().enumerate() {
            for kind in Structure::ALL {
                if let Some(m) = s.get(kind) {
                    if m.dims() != manifest.source_dims {
                        return Err(Error::DimsMismatch {
                            expected: manifest.source_dims.as_tuple(),
                            found: m.dims().as_tuple(),
                        }
                        .at_slice(i));
                    }
                    if m.spacing() != manifest.pixel_spacing_mm {
                        return Err(Error::validation(
                            format!("slices[{i}].{}", kind.name()),
                            "mask spacing differs from the study spacing",
                        ));
                    }
                }
            }
        }
        Ok(Study { manifest, slices })
    }

    pub fn manifest(&self) -> &StudyManifest {
        &self.manifest
    }

    pub fn study_id(&self) -> &str {
        &self.manifest.study_id
    }

    pub fn spacing(&self) -> Spacing {
        self.manifest.pixel_spacing_mm
    }

    pub fn slice_thickness_mm(&self) -> f64 {
        self.manifest.slice_thickness_mm
    }

    pub fn dims(&self) -> Dims {
        self.manifest.source_dims
    }

    pub fn slices(&self) -> &[SliceMasks] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Indices of slices with a non-empty tumor mask.
    pub fn tumor_slices(&self) -> Vec<usize> {
        self.slices
            .iter()
            .enumerate()
            .filter(|(_, s)| s.has_tumor())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Loads every mask referenced by a validated manifest. Slices load in
/// parallel; the result does not depend on scheduling.
pub fn assemble_study(manifest: &StudyManifest) -> Result<Study> {
    let dims = manifest.source_dims;
    let spacing = manifest.pixel_spacing_mm;
    let slices = manifest
        .slices
        .par_iter()
        .map(|entry| {
            let mut masks = SliceMasks::default();
            for kind in Structure::ALL {
                if let Some(rel) = entry.mask_path(kind) {
                    let m = load_mask(manifest.resolve(rel), dims)
                        .map_err(|e| e.at_slice(entry.index))?
                        .with_spacing(spacing);
                    *masks.slot(kind) = Some(m);
                }
            }
            Ok(masks)
        })
        .collect::<Result<Vec<_>>>()?;
    Study::new(manifest.clone(), slices)
}

/// Writes a manifest next to its masks. Paths inside are kept as given.
pub fn save_manifest(manifest: &StudyManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_mask(dir: &Path, name: &str, dims: Dims, fg: &[(usize, usize)]) {
        let m = BinaryMask::from_pixels(dims, Spacing::UNIT, fg.iter().map(|&(r, c)| Pixel::new(r, c)));
        save_mask(&m, dir.join(name)).unwrap();
    }

    fn write_manifest(dir: &Path, value: serde_json::Value) -> PathBuf {
        let p = dir.join("manifest.json");
        fs::write(&p, value.to_string()).unwrap();
        p
    }

    #[test]
    fn loads_three_slice_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(8, 8);
        for i in 0..3 {
            write_mask(dir.path(), &format!("lung{i}.png"), dims, &[(2, 2)]);
        }
        let p = write_manifest(
            dir.path(),
            json!({
                "study_id": "s1",
                "pixel_spacing_mm": [0.7, 0.7],
                "slice_thickness_mm": 2.5,
                "source_dims": [8, 8],
                // deliberately out of order: ordering follows the index
                "slices": [
                    {"index": 2, "lung": "lung2.png"},
                    {"index": 0, "lung": "lung0.png"},
                    {"index": 1, "lung": "lung1.png"},
                ]
            }),
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.slices.len(), 3);
        assert_eq!(m.slices.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(m.pixel_spacing_mm, Spacing::new(0.7, 0.7));
        let study = assemble_study(&m).unwrap();
        assert_eq!(study.len(), 3);
        assert!(study.slices().iter().all(|s| s.lung.is_some() && s.tumor.is_none()));
        assert_eq!(study.slices()[0].lung.as_ref().unwrap().spacing(), Spacing::new(0.7, 0.7));
    }

    #[test]
    fn zero_thickness_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            json!({
                "study_id": "s", "pixel_spacing_mm": [1, 1], "slice_thickness_mm": 0,
                "source_dims": [4, 4], "slices": [{"index": 0}]
            }),
        );
        match load_manifest(&p) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "slice_thickness_mm"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_spacing_duplicates_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let base = |slices: serde_json::Value, spacing: serde_json::Value| {
            json!({"study_id": "s", "pixel_spacing_mm": spacing, "slice_thickness_mm": 1.0,
                   "source_dims": [4, 4], "slices": slices})
        };
        let cases = [
            (base(json!([{"index": 0}]), json!([0.0, 1.0])), "pixel_spacing_mm"),
            (base(json!([{"index": 0}, {"index": 0}]), json!([1.0, 1.0])), "slices"),
            (base(json!([{"index": 0}, {"index": 2}]), json!([1.0, 1.0])), "slices"),
            (base(json!([]), json!([1.0, 1.0])), "slices"),
        ];
        for (doc, field) in cases {
            let p = write_manifest(dir.path(), doc);
            match load_manifest(&p) {
                Err(Error::Validation { field: f, .. }) => assert_eq!(f, field),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_mask_dims_names_the_slice() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "ok.png", Dims::new(4, 4), &[]);
        write_mask(dir.path(), "bad.png", Dims::new(5, 4), &[]);
        let p = write_manifest(
            dir.path(),
            json!({
                "study_id": "s", "pixel_spacing_mm": [1, 1], "slice_thickness_mm": 1,
                "source_dims": [4, 4],
                "slices": [{"index": 0, "tumor": "ok.png"}, {"index": 1, "lung": "bad.png"}]
            }),
        );
        match load_manifest(&p) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "slices[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("absent.json")),
            Err(Error::MissingFile { .. })
        ));
        let p = dir.path().join("bad.json");
        fs::write(&p, "{ not json").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn tumor_on_subset_of_slices() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(6, 6);
        write_mask(dir.path(), "t.png", dims, &[(3, 3), (3, 4)]);
        write_mask(dir.path(), "lung.png", dims, &[(1, 1)]);
        let slices: Vec<_> = (0..10)
            .map(|i| {
                if (3..=7).contains(&i) {
                    json!({"index": i, "lung": "lung.png", "tumor": "t.png"})
                } else {
                    json!({"index": i, "lung": "lung.png"})
                }
            })
            .collect();
        let p = write_manifest(
            dir.path(),
            json!({"study_id": "s", "pixel_spacing_mm": [1, 1], "slice_thickness_mm": 1,
                   "source_dims": [6, 6], "slices": slices}),
        );
        let study = assemble_study(&load_manifest(&p).unwrap()).unwrap();
        assert_eq!(study.tumor_slices(), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn study_without_lungs_still_assembles() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "t.png", Dims::new(4, 4), &[(1, 1)]);
        let p = write_manifest(
            dir.path(),
            json!({"study_id": "s", "pixel_spacing_mm": [1, 1], "slice_thickness_mm": 1,
                   "source_dims": [4, 4], "slices": [{"index": 0, "tumor": "t.png"}]}),
        );
        let study = assemble_study(&load_manifest(&p).unwrap()).unwrap();
        assert!(study.slices()[0].lung.is_none());
        assert!(study.slices()[0].has_tumor());
    }
}
