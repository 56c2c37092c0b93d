use serde::{Deserialize, Serialize};

use crate::ingest::{BinaryMask, Dims, Pixel, Spacing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl PixelBox {
    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }

    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }
}

/// A maximal 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Member pixels in raster order.
    pub pixels: Vec<Pixel>,
    pub bbox: PixelBox,
    pub area_px: usize,
}

impl Component {
    pub fn to_mask(&self, dims: Dims, spacing: Spacing) -> BinaryMask {
        BinaryMask::from_pixels(dims, spacing, self.pixels.iter().copied())
    }

    /// First pixel in raster order; its west neighbor is outer background.
    pub fn first_pixel(&self) -> Pixel {
        self.pixels[0]
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling with 8-connectivity. Returns one label per
/// pixel (0 = background) and the number of components; labels are assigned
/// in raster order of each component's first pixel, starting at 1.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut labels = vec![0u32; rows * cols];
    let mut parent: Vec<u32> = vec![0];

    for r in 0..rows {
        for c in 0..cols {
            if !mask.get(r, c) {
                continue;
            }
            // already-visited neighbors: W, NW, N, NE
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            if c > 0 && labels[r * cols + c - 1] != 0 {
                neighbors[n] = labels[r * cols + c - 1];
                n += 1;
            }
            if r > 0 {
                let up = (r - 1) * cols;
                if c > 0 && labels[up + c - 1] != 0 {
                    neighbors[n] = labels[up + c - 1];
                    n += 1;
                }
                if labels[up + c] != 0 {
                    neighbors[n] = labels[up + c];
                    n += 1;
                }
                if c + 1 < cols && labels[up + c + 1] != 0 {
                    neighbors[n] = labels[up + c + 1];
                    n += 1;
                }
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let l = *neighbors[..n].iter().min().unwrap();
                for &other in &neighbors[..n] {
                    union(&mut parent, l, other);
                }
                l
            };
            labels[r * cols + c] = label;
        }
    }

    // Second pass: resolve roots and renumber densely in raster order.
    let mut dense = vec![0u32; parent.len()];
    let mut next = 0u32;
    for label in labels.iter_mut().filter(|l| **l != 0) {
        let root = find(&mut parent, *label);
        if dense[root as usize] == 0 {
            next += 1;
            dense[root as usize] = next;
        }
        *label = dense[root as usize];
    }
    (labels, next as usize)
}

/// Partitions the foreground into 8-connected components, largest first.
/// Ties keep raster order of the components' first pixels.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (labels, count) = label_components(mask);
    let cols = mask.cols();
    let mut comps: Vec<Component> = (0..count)
        .map(|_| Component {
            pixels: Vec::new(),
            bbox: PixelBox {
                min_row: usize::MAX,
                min_col: usize::MAX,
                max_row: 0,
                max_col: 0,
            },
            area_px: 0,
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = Pixel::new(i / cols, i % cols);
        let comp = &mut comps[l as usize - 1];
        comp.pixels.push(p);
        comp.bbox.min_row = comp.bbox.min_row.min(p.row);
        comp.bbox.max_row = comp.bbox.max_row.max(p.row);
        comp.bbox.min_col = comp.bbox.min_col.min(p.col);
        comp.bbox.max_col = comp.bbox.max_col.max(p.col);
    }
    for comp in &mut comps {
        comp.area_px = comp.pixels.len();
    }
    comps.sort_by(|a, b| b.area_px.cmp(&a.area_px));
    comps
}

/// The largest component as its own mask, or `None` for an empty mask.
pub fn largest_component_mask(mask: &BinaryMask) -> Option<BinaryMask> {
    connected_components(mask)
        .first()
        .map(|c| c.to_mask(mask.dims(), mask.spacing()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn mask_from(rows: usize, cols: usize, bits: Vec<bool>) -> BinaryMask {
        BinaryMask::from_bits(Dims::new(rows, cols), bits, Spacing::UNIT).unwrap()
    }

    /// Breadth-first flood fill; returns component sizes in discovery order.
    fn flood_fill_sizes(mask: &BinaryMask) -> Vec<usize> {
        let (rows, cols) = (mask.rows(), mask.cols());
        let mut seen = vec![false; rows * cols];
        let mut sizes = Vec::new();
        for start in 0..rows * cols {
            if !mask.bits()[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut q = VecDeque::from([start]);
            let mut size = 0;
            while let Some(i) = q.pop_front() {
                size += 1;
                let (r, c) = ((i / cols) as isize, (i % cols) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if mask.get_signed(nr, nc) {
                            let j = nr as usize * cols + nc as usize;
                            if !seen[j] {
                                seen[j] = true;
                                q.push_back(j);
                            }
                        }
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    #[test]
    fn two_disjoint_squares() {
        let m = BinaryMask::from_fn(Dims::new(10, 10), Spacing::UNIT, |r, c| {
            (r < 3 && c < 3) || ((5..8).contains(&r) && (6..9).contains(&c))
        });
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.area_px == 9));
        assert_eq!(comps[0].bbox, PixelBox { min_row: 0, min_col: 0, max_row: 2, max_col: 2 });
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::new(Dims::new(4, 4), Spacing::UNIT);
        assert!(connected_components(&m).is_empty());
        assert!(largest_component_mask(&m).is_none());
    }

    #[test]
    fn diagonal_touch_is_connected() {
        let m = mask_from(2, 2, vec![true, false, false, true]);
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn u_shape_merges_labels() {
        // the two arms get different provisional labels and merge at the bottom
        let m = BinaryMask::from_fn(Dims::new(5, 5), Spacing::UNIT, |r, c| c == 0 || c == 4 || r == 4);
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area_px, 13);
    }

    proptest! {
        #[test]
        fn matches_flood_fill(bits in proptest::collection::vec(proptest::bool::weighted(0.45), 64 * 64)) {
            let m = mask_from(64, 64, bits);
            let comps = connected_components(&m);
            let mut expected = flood_fill_sizes(&m);
            let mut got: Vec<usize> = comps.iter().map(|c| c.area_px).collect();
            prop_assert_eq!(got.len(), expected.len());
            // sorted largest first
            prop_assert!(got.windows(2).all(|w| w[0] >= w[1]));
            got.sort_unstable();
            expected.sort_unstable();
            prop_assert_eq!(got, expected);
            let total: usize = comps.iter().map(|c| c.area_px).sum();
            prop_assert_eq!(total, m.count());
        }
    }
}
