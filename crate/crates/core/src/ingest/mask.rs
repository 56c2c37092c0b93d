use std::path::Path;

use image::{GrayImage, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical size of one pixel in millimeters, `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Spacing {
    pub row: f64,
    pub col: f64,
}

impl Spacing {
    pub const UNIT: Spacing = Spacing { row: 1.0, col: 1.0 };

    pub fn new(row: f64, col: f64) -> Self {
        Spacing { row, col }
    }

    pub fn is_valid(&self) -> bool {
        self.row > 0.0 && self.col > 0.0 && self.row.is_finite() && self.col.is_finite()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Spacing::new(self.row * k, self.col * k)
    }

    pub fn transposed(&self) -> Self {
        Spacing::new(self.col, self.row)
    }
}

impl From<[f64; 2]> for Spacing {
    fn from(v: [f64; 2]) -> Self {
        Spacing::new(v[0], v[1])
    }
}

impl From<Spacing> for [f64; 2] {
    fn from(s: Spacing) -> Self {
        [s.row, s.col]
    }
}

/// Raster size, `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Dims { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_tuple(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

impl From<[usize; 2]> for Dims {
    fn from(v: [usize; 2]) -> Self {
        Dims::new(v[0], v[1])
    }
}

impl From<Dims> for [usize; 2] {
    fn from(d: Dims) -> Self {
        [d.rows, d.cols]
    }
}

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Pixel { row, col }
    }

    /// Squared center-to-center distance in mm².
    #[inline]
    pub fn distance_sq_mm(self, other: Pixel, spacing: Spacing) -> f64 {
        let dr = (self.row as i64 - other.row as i64) as f64 * spacing.row;
        let dc = (self.col as i64 - other.col as i64) as f64 * spacing.col;
        dr * dr + dc * dc
    }

    #[inline]
    pub fn distance_mm(self, other: Pixel, spacing: Spacing) -> f64 {
        self.distance_sq_mm(other, spacing).sqrt()
    }

    pub fn is_8_adjacent(self, other: Pixel) -> bool {
        self != other && self.row.abs_diff(other.row) <= 1 && self.col.abs_diff(other.col) <= 1
    }
}

/// Row-major boolean raster with physical pixel spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    spacing_mm: Spacing,
}

impl BinaryMask {
    pub fn new(dims: Dims, spacing: Spacing) -> Self {
        BinaryMask {
            rows: dims.rows,
            cols: dims.cols,
            bits: vec![false; dims.len()],
            spacing_mm: spacing,
        }
    }

    pub fn from_bits(dims: Dims, bits: Vec<bool>, spacing: Spacing) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::validation(
                "bits",
                format!("{} values for a {}x{} grid", bits.len(), dims.rows, dims.cols),
            ));
        }
        if !spacing.is_valid() {
            return Err(Error::validation("spacing_mm", "components must be > 0"));
        }
        Ok(BinaryMask {
            rows: dims.rows,
            cols: dims.cols,
            bits,
            spacing_mm: spacing,
        })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.len());
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                bits.push(f(r, c));
            }
        }
        BinaryMask {
            rows: dims.rows,
            cols: dims.cols,
            bits,
            spacing_mm: spacing,
        }
    }

    pub fn from_pixels(dims: Dims, spacing: Spacing, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut mask = BinaryMask::new(dims, spacing);
        for p in pixels {
            mask.set(p.row, p.col, true);
        }
        mask
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing_mm = spacing;
        self
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    /// Like [`get`](Self::get) but treats out-of-range coordinates as background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.rows
            && (col as usize) < self.cols
            && self.bits[row as usize * self.cols + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn has_foreground(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Foreground pixels in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = Pixel> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i / cols, i % cols))
    }

    /// Foreground pixels with at least one 4-neighbor that is background or
    /// outside the raster.
    pub fn boundary_pixels(&self) -> Vec<Pixel> {
        self.foreground()
            .filter(|p| {
                let (r, c) = (p.row as isize, p.col as isize);
                !self.get_signed(r - 1, c)
                    || !self.get_signed(r + 1, c)
                    || !self.get_signed(r, c - 1)
                    || !self.get_signed(r, c + 1)
            })
            .collect()
    }

    pub fn same_grid(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimsMismatch {
                expected: self.dims().as_tuple(),
                found: other.dims().as_tuple(),
            });
        }
        if self.spacing_mm != other.spacing_mm {
            return Err(Error::validation(
                "spacing_mm",
                format!("{:?} vs {:?}", self.spacing_mm, other.spacing_mm),
            ));
        }
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_grid(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(BinaryMask { bits, ..self.clone() })
    }

    pub fn intersects(&self, other: &BinaryMask) -> Result<bool> {
        self.same_grid(other)?;
        Ok(self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b))
    }

    /// Swaps rows and columns, including the spacing components.
    pub fn transpose(&self) -> BinaryMask {
        let dims = Dims::new(self.cols, self.rows);
        BinaryMask::from_fn(dims, self.spacing_mm.transposed(), |r, c| self.get(c, r))
    }
}

/// Reads an 8-bit single-channel PNG; any nonzero value is foreground.
///
/// The returned mask carries unit spacing; callers attach the study spacing.
pub fn load_mask(path: impl AsRef<Path>, expected_dims: Dims) -> Result<BinaryMask> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(decode_err(format!(
                "expected 8-bit single-channel image, found {:?}",
                other.color()
            )))
        }
    };
    let found = Dims::new(gray.height() as usize, gray.width() as usize);
    if found != expected_dims {
        return Err(Error::DimsMismatch {
            expected: expected_dims.as_tuple(),
            found: found.as_tuple(),
        });
    }
    let bits = gray.as_raw().iter().map(|&v| v > 0).collect();
    BinaryMask::from_bits(found, bits, Spacing::UNIT)
}

/// Writes foreground as 255 and background as 0.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_fn(mask.cols() as u32, mask.rows() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Reads only the PNG header to obtain `(rows, cols)`.
pub fn probe_dims(path: &Path) -> Result<Dims> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(Dims::new(h as usize, w as usize))
}
