//! CT preprocessing: lung windowing of Hounsfield values, CLAHE and resizing.
//!
//! Every quantization step rounds half-up.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BinaryMask, Dims, Spacing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width_hu: f64,
    pub center_hu: f64,
}

impl WindowSpec {
    pub const LUNG: WindowSpec = WindowSpec {
        width_hu: 1400.0,
        center_hu: -700.0,
    };
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::LUNG
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheSpec {
    /// Multiple of the uniform per-bin count of a tile.
    pub clip_limit: f64,
    /// Tile counts `(rows, cols)`.
    pub tile_grid: (usize, usize),
}

impl Default for ClaheSpec {
    fn default() -> Self {
        ClaheSpec {
            clip_limit: 1.0,
            tile_grid: (16, 16),
        }
    }
}

/// Hounsfield-unit raster.
#[derive(Debug, Clone, PartialEq)]
pub struct HuGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<i32>,
    pub spacing_mm: Spacing,
}

impl HuGrid {
    pub fn new(dims: Dims, values: Vec<i32>, spacing: Spacing) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::ShapeMismatch {
                left: dims.len(),
                right: values.len(),
            });
        }
        Ok(HuGrid {
            rows: dims.rows,
            cols: dims.cols,
            values,
            spacing_mm: spacing,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.rows, self.cols)
    }
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image8 {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u8>,
    pub spacing_mm: Spacing,
}

impl Image8 {
    pub fn new(dims: Dims, values: Vec<u8>, spacing: Spacing) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::ShapeMismatch {
                left: dims.len(),
                right: values.len(),
            });
        }
        Ok(Image8 {
            rows: dims.rows,
            cols: dims.cols,
            values,
            spacing_mm: spacing,
        })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut values = Vec::with_capacity(dims.len());
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                values.push(f(r, c));
            }
        }
        Image8 {
            rows: dims.rows,
            cols: dims.cols,
            values,
            spacing_mm: spacing,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }
}

#[inline]
fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Maps `[center - width/2, center + width/2]` linearly onto `[0, 255]`,
/// clamping outside the window.
pub fn window_hu(raw: &HuGrid, spec: WindowSpec) -> Result<Image8> {
    if raw.values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(spec.width_hu > 0.0) {
        return Err(Error::validation("width_hu", "must be > 0"));
    }
    let values = raw.values.iter().map(|&hu| window_value(hu as f64, spec)).collect();
    Image8::new(raw.dims(), values, raw.spacing_mm)
}

pub fn window_value(hu: f64, spec: WindowSpec) -> u8 {
    let lo = spec.center_hu - spec.width_hu / 2.0;
    let v = (hu - lo) / spec.width_hu * 255.0;
    round_half_up(v.clamp(0.0, 255.0)) as u8
}

const BINS: usize = 256;

/// Contrast-limited adaptive histogram equalization.
///
/// The image is padded by reflection (without repeating the edge pixel) to a
/// multiple of the tile grid so every tile has the same pixel count. Each
/// tile's histogram is clipped at `clip_limit * tile_pixels / 256` (at least
/// one count), the excess is spread in a single pass over all bins, and the
/// tile's mapping is its scaled cumulative histogram. Output pixels blend the
/// four nearest tile mappings bilinearly.
pub fn clahe(img: &Image8, spec: ClaheSpec) -> Result<Image8> {
    let (grid_r, grid_c) = spec.tile_grid;
    if grid_r == 0 || grid_c == 0 || !(spec.clip_limit > 0.0) {
        return Err(Error::validation(
            "clahe",
            "clip_limit must be > 0 and tile counts >= 1",
        ));
    }
    if img.rows < grid_r || img.cols < grid_c {
        return Err(Error::TileTooSmall {
            rows: img.rows,
            cols: img.cols,
            tile_rows: grid_r,
            tile_cols: grid_c,
        });
    }
    let tile_h = img.rows.div_ceil(grid_r);
    let tile_w = img.cols.div_ceil(grid_c);
    let padded = |r: usize, c: usize| img.get(reflect101(r, img.rows), reflect101(c, img.cols));

    let luts: Vec<[u8; BINS]> = (0..grid_r * grid_c)
        .map(|t| {
            let (tr, tc) = (t / grid_c, t % grid_c);
            let mut hist = [0usize; BINS];
            for r in tr * tile_h..(tr + 1) * tile_h {
                for c in tc * tile_w..(tc + 1) * tile_w {
                    hist[padded(r, c) as usize] += 1;
                }
            }
            tile_lut(&mut hist, tile_h * tile_w, spec.clip_limit)
        })
        .collect();

    let mut out = Vec::with_capacity(img.values.len());
    for r in 0..img.rows {
        let (r0, r1, fr) = interp_coord(r, tile_h, grid_r);
        for c in 0..img.cols {
            let (c0, c1, fc) = interp_coord(c, tile_w, grid_c);
            let v = img.get(r, c) as usize;
            let l = |tr: usize, tc: usize| luts[tr * grid_c + tc][v] as f64;
            let top = l(r0, c0) * (1.0 - fc) + l(r0, c1) * fc;
            let bottom = l(r1, c0) * (1.0 - fc) + l(r1, c1) * fc;
            let blended = top * (1.0 - fr) + bottom * fr;
            out.push(round_half_up(blended).clamp(0.0, 255.0) as u8);
        }
    }
    Image8::new(img.dims(), out, img.spacing_mm)
}

fn reflect101(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Neighboring tile indices and the blend weight of the second one for a
/// coordinate, with tile centers at `(k + 0.5) * tile`.
fn interp_coord(x: usize, tile: usize, grid: usize) -> (usize, usize, f64) {
    let t = (x as f64 + 0.5) / tile as f64 - 0.5;
    let lo = t.floor();
    let frac = t - lo;
    let lo = lo as isize;
    let a = lo.clamp(0, grid as isize - 1) as usize;
    let b = (lo + 1).clamp(0, grid as isize - 1) as usize;
    (a, b, frac)
}

/// Clips, redistributes and integrates one tile histogram into a mapping.
pub fn tile_lut(hist: &mut [usize; BINS], tile_pixels: usize, clip_limit: f64) -> [u8; BINS] {
    let limit = ((clip_limit * tile_pixels as f64 / BINS as f64) as usize).max(1);
    let mut excess = 0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let batch = excess / BINS;
    let residual = excess % BINS;
    for h in hist.iter_mut() {
        *h += batch;
    }
    if residual > 0 {
        let stride = (BINS / residual).max(1);
        let mut left = residual;
        let mut i = 0;
        while left > 0 && i < BINS {
            hist[i] += 1;
            left -= 1;
            i += stride;
        }
    }
    let scale = 255.0 / tile_pixels as f64;
    let mut lut = [0u8; BINS];
    let mut sum = 0usize;
    for (v, h) in hist.iter().enumerate() {
        sum += h;
        lut[v] = round_half_up(sum as f64 * scale).min(255.0) as u8;
    }
    lut
}

/// Resampling to a new raster size; spacing is rescaled so the physical
/// extent is preserved.
pub trait Resize: Sized {
    fn resize(&self, target: Dims) -> Result<Self>;
}

fn check_target(target: Dims) -> Result<()> {
    if target.rows == 0 || target.cols == 0 {
        return Err(Error::validation("target_dims", "must be at least 1x1"));
    }
    Ok(())
}

fn rescaled_spacing(spacing: Spacing, from: Dims, to: Dims) -> Spacing {
    Spacing::new(
        spacing.row * from.rows as f64 / to.rows as f64,
        spacing.col * from.cols as f64 / to.cols as f64,
    )
}

/// Bilinear with half-pixel centers; identity when dims are unchanged.
impl Resize for Image8 {
    fn resize(&self, target: Dims) -> Result<Self> {
        check_target(target)?;
        if target == self.dims() {
            return Ok(self.clone());
        }
        let sr = self.rows as f64 / target.rows as f64;
        let sc = self.cols as f64 / target.cols as f64;
        let src = |x: usize, scale: f64, n: usize| {
            let f = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = f.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, f - i0 as f64)
        };
        let spacing = rescaled_spacing(self.spacing_mm, self.dims(), target);
        Ok(Image8::from_fn(target, spacing, |r, c| {
            let (r0, r1, fr) = src(r, sr, self.rows);
            let (c0, c1, fc) = src(c, sc, self.cols);
            let g = |rr, cc| self.get(rr, cc) as f64;
            let top = g(r0, c0) * (1.0 - fc) + g(r0, c1) * fc;
            let bottom = g(r1, c0) * (1.0 - fc) + g(r1, c1) * fc;
            round_half_up(top * (1.0 - fr) + bottom * fr).clamp(0.0, 255.0) as u8
        }))
    }
}

/// Nearest neighbor, sampling source index `floor(dst * src_len / dst_len)`.
impl Resize for BinaryMask {
    fn resize(&self, target: Dims) -> Result<Self> {
        check_target(target)?;
        if target == self.dims() {
            return Ok(self.clone());
        }
        let spacing = rescaled_spacing(self.spacing(), self.dims(), target);
        let (rows, cols) = (self.rows(), self.cols());
        Ok(BinaryMask::from_fn(target, spacing, |r, c| {
            self.get(r * rows / target.rows, c * cols / target.cols)
        }))
    }
}

/// Reads a 16-bit grayscale PNG whose samples are two's-complement HU values.
pub fn load_hu_png(path: impl AsRef<Path>, spacing: Spacing) -> Result<HuGrid> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("expected 16-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let dims = Dims::new(gray.height() as usize, gray.width() as usize);
    let values = gray.as_raw().iter().map(|&v| v as i16 as i32).collect();
    HuGrid::new(dims, values, spacing)
}

pub fn save_hu_png(grid: &HuGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u16> = grid
        .values
        .iter()
        .map(|&v| v.clamp(i16::MIN as i32, i16::MAX as i32) as i16 as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(grid.cols as u32, grid.rows as u32, data).expect("buffer size matches dims");
    img.save(path).map_err(|e| image_err(path, e))
}

/// Reads the plain-text grid format: a header line `HUGRID <rows> <cols>`
/// followed by `rows * cols` whitespace-separated integers in row-major order.
pub fn load_hu_text(path: impl AsRef<Path>, spacing: Spacing) -> Result<HuGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some("HUGRID") {
        return Err(parse_err("missing HUGRID header"));
    }
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err("bad dimensions in header"))
    };
    let dims = Dims::new(dim()?, dim()?);
    let values = tokens
        .map(|t| t.parse::<i32>().map_err(|_| parse_err(&format!("bad value `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    HuGrid::new(dims, values, spacing)
}

pub fn load_hu(path: impl AsRef<Path>, spacing: Spacing) -> Result<HuGrid> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        load_hu_png(path, spacing)
    } else {
        load_hu_text(path, spacing)
    }
}

pub fn save_image8(img: &Image8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = GrayImage::from_raw(img.cols as u32, img.rows as u32, img.values.clone())
        .expect("buffer size matches dims");
    g.save(path).map_err(|e| image_err(path, e))
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// The full chain: window, optional CLAHE, optional resize.
pub fn preprocess_slice(
    raw: &HuGrid,
    window: WindowSpec,
    clahe_spec: Option<ClaheSpec>,
    target: Option<Dims>,
) -> Result<Image8> {
    let mut img = window_hu(raw, window)?;
    if let Some(spec) = clahe_spec {
        img = clahe(&img, spec)?;
    }
    if let Some(t) = target {
        img = img.resize(t)?;
    }
    Ok(img)
}
