//! Contours, maximum diameter and mask-to-mask distance on a small mask.

use tstage::geometry::{connected_components, contour_of, diameter_pair, max_diameter_brute_force, max_diameter_mm, min_distance_mm};
use tstage::ingest::{BinaryMask, Dims, Spacing};

fn main() -> tstage::Result<()> {
    let dims = Dims::new(40, 60);
    let spacing = Spacing::new(0.7, 1.1);
    let blob = BinaryMask::from_fn(dims, spacing, |r, c| {
        let (y, x) = ((r as f64 - 18.0) / 12.0, (c as f64 - 22.0) / 16.0);
        y * y + x * x <= 1.0
    });
    let wall = BinaryMask::from_fn(dims, spacing, |_, c| c >= 50);

    let comp = &connected_components(&blob)[0];
    let contour = contour_of(&blob, comp);
    println!("{} pixels, {} on the outer contour", comp.pixels.len(), contour.len());
    println!("diameter {:.4} mm (brute force {:.4} mm)", max_diameter_mm(&contour, spacing), max_diameter_brute_force(&comp.pixels, spacing));
    if let Some((a, b)) = diameter_pair(&contour.points, spacing) {
        println!("endpoints {a:?} {b:?}");
    }
    println!("distance to wall {:.4} mm", min_distance_mm(&blob, &wall)?);
    Ok(())
}
