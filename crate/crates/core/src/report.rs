//! Report files and per-slice overlay images.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::anatomy::{estimate_diaphragm, DiaphragmParams};
use crate::error::{Error, Result};
use crate::geometry::{connected_components, contour_of, diameter_pair, extract_contours, farthest_pair};
use crate::ingest::{BinaryMask, Pixel, Structure, Study};
use crate::preprocess::{load_hu, window_hu, WindowSpec};
use crate::staging::StageReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A stage report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReportFile {
    pub tool_version: String,
    #[serde(flatten)]
    pub report: StageReport,
}

impl StageReportFile {
    pub fn new(report: StageReport) -> Self {
        StageReportFile { tool_version: TOOL_VERSION.to_string(), report }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }
}

pub const LUNG_COLOR: Rgb<u8> = Rgb([0, 200, 0]);
pub const MEDIASTINUM_COLOR: Rgb<u8> = Rgb([230, 0, 0]);
pub const DIAPHRAGM_COLOR: Rgb<u8> = Rgb([40, 90, 255]);
pub const TUMOR_COLOR: Rgb<u8> = Rgb([255, 220, 0]);

fn put(img: &mut RgbImage, p: Pixel, color: Rgb<u8>) {
    if (p.col as u32) < img.width() && (p.row as u32) < img.height() {
        img.put_pixel(p.col as u32, p.row as u32, color);
    }
}

/// Bresenham line; with `dash` set, alternates runs of that many pixels on
/// and off.
fn line(img: &mut RgbImage, a: Pixel, b: Pixel, color: Rgb<u8>, dash: Option<usize>) {
    let (mut x, mut y) = (a.col as i64, a.row as i64);
    let (x1, y1) = (b.col as i64, b.row as i64);
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    let mut step = 0usize;
    loop {
        if dash.is_none_or(|d| (step / d) % 2 == 0) {
            put(img, Pixel::new(y as usize, x as usize), color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        step += 1;
    }
}

fn background(study: &Study, slice: usize) -> Result<RgbImage> {
    let dims = study.dims();
    let manifest = study.manifest();
    let mut img = RgbImage::from_pixel(dims.cols as u32, dims.rows as u32, Rgb([20, 20, 20]));
    if let Some(rel) = manifest.slices[slice].ct_image_path.as_deref() {
        let gray = window_hu(&load_hu(manifest.resolve(rel), study.spacing())?, WindowSpec::LUNG)?;
        if gray.dims() == dims {
            for (i, &v) in gray.values.iter().enumerate() {
                img.put_pixel((i % dims.cols) as u32, (i / dims.cols) as u32, Rgb([v, v, v]));
            }
        }
    }
    Ok(img)
}

/// Contours of every structure on `slice` over the windowed CT (or a dark
/// background), with the tumor's maximum diameter drawn solid and its
/// maximum separation from each structure drawn dashed in that structure's
/// color. Staging itself uses the minimum separation.
pub fn render_overlay(study: &Study, slice: usize, diaphragm: DiaphragmParams) -> Result<RgbImage> {
    let masks = &study.slices()[slice];
    let mut img = background(study, slice)?;
    let spacing = study.spacing();
    let mut structures: Vec<(BinaryMask, Rgb<u8>)> = Vec::new();
    if let Some(lung) = masks.present(Structure::Lung) {
        structures.push((lung.clone(), LUNG_COLOR));
        structures.push((estimate_diaphragm(lung, diaphragm)?, DIAPHRAGM_COLOR));
    }
    if let Some(med) = masks.present(Structure::Mediastinum) {
        structures.push((med.clone(), MEDIASTINUM_COLOR));
    }
    for (mask, color) in &structures {
        for c in extract_contours(mask) {
            for &p in &c.points {
                put(&mut img, p, *color);
            }
        }
    }
    if let Some(tumor_all) = masks.present(Structure::Tumor) {
        for c in extract_contours(tumor_all) {
            for &p in &c.points {
                put(&mut img, p, TUMOR_COLOR);
            }
        }
        let main = &connected_components(tumor_all)[0];
        let tumor = main.to_mask(tumor_all.dims(), spacing);
        if let Some((a, b)) = diameter_pair(&contour_of(&tumor, main).points, spacing) {
            line(&mut img, a, b, TUMOR_COLOR, None);
        }
        let edge = tumor.boundary_pixels();
        for (mask, color) in &structures {
            if let Some((a, b)) = farthest_pair(&edge, &mask.boundary_pixels(), spacing) {
                line(&mut img, a, b, *color, Some(3));
            }
        }
    }
    Ok(img)
}

/// Writes `overlay_NNN.png` for every tumor-bearing slice.
pub fn write_overlays(study: &Study, diaphragm: DiaphragmParams, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    study
        .tumor_slices()
        .into_iter()
        .map(|i| {
            let path = dir.join(format!("overlay_{i:03}.png"));
            render_overlay(study, i, diaphragm)?.save(&path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(&path, io),
                other => Error::Decode { path: path.clone(), message: other.to_string() },
            })?;
            Ok(path)
        })
        .collect()
}
