use serde::{Deserialize, Serialize};

use super::components::{connected_components, Component};
use crate::ingest::{BinaryMask, Pixel};

/// Ordered boundary pixels of one region.
///
/// Consecutive points are 8-adjacent. Pixels on one-pixel-wide parts of a
/// region are visited once per side, so a point may repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Pixel>,
    pub closed: bool,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Clockwise on screen (row axis pointing down), starting east.
const DIRS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

const WEST: usize = 4;

fn dir_between(from: Pixel, to: Pixel) -> usize {
    let d = (
        to.row as isize - from.row as isize,
        to.col as isize - from.col as isize,
    );
    DIRS.iter().position(|&x| x == d).expect("pixels are 8-adjacent")
}

fn step(mask: &BinaryMask, p: Pixel, dir: usize) -> Option<Pixel> {
    let (dr, dc) = DIRS[dir];
    let (r, c) = (p.row as isize + dr, p.col as isize + dc);
    mask.get_signed(r, c).then(|| Pixel::new(r as usize, c as usize))
}

/// Follows the outer border of the component containing `start`, which must
/// be that component's first pixel in raster order.
///
/// This is the outer-border case of Suzuki–Abe border following with
/// 8-connected foreground: the trace advances counterclockwise and stops when
/// it is about to re-enter the start pixel from the pixel it first left to.
pub fn trace_outer_border(mask: &BinaryMask, start: Pixel) -> Contour {
    // Clockwise from the west neighbor: the first foreground pixel found is
    // the last pixel of the border.
    let last = (0..8)
        .map(|k| (WEST + k) % 8)
        .find_map(|d| step(mask, start, d));
    let Some(last) = last else {
        return Contour {
            points: vec![start],
            closed: true,
        };
    };

    let mut points = Vec::new();
    let mut prev = last;
    let mut cur = start;
    loop {
        points.push(cur);
        // Counterclockwise around `cur`, beginning just after `prev`.
        let back = dir_between(cur, prev);
        let next = (1..=8)
            .map(|k| (back + 8 - k) % 8)
            .find_map(|d| step(mask, cur, d))
            .expect("a non-isolated pixel has a foreground neighbor");
        if next == start && cur == last {
            break;
        }
        prev = cur;
        cur = next;
    }
    Contour { points, closed: true }
}

/// One closed outer contour per 8-connected component, in the same order as
/// [`connected_components`]. Borders of holes are not reported.
pub fn extract_contours(mask: &BinaryMask) -> Vec<Contour> {
    connected_components(mask)
        .iter()
        .map(|c| contour_of(mask, c))
        .collect()
}

pub fn contour_of(mask: &BinaryMask, component: &Component) -> Contour {
    trace_outer_border(mask, component.first_pixel())
}
