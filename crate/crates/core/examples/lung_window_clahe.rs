//! Lung windowing and CLAHE on a synthetic HU slice, written as PNGs.

use tstage::ingest::{Dims, Spacing};
use tstage::preprocess::{clahe, save_image8, window_hu, ClaheSpec, HuGrid, WindowSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = Dims::new(128, 128);
    let values = (0..dims.len())
        .map(|i| {
            let (r, c) = ((i / dims.cols) as f64, (i % dims.cols) as f64);
            let lung = ((r - 64.0).powi(2) + (c - 40.0).powi(2)).sqrt() < 30.0 || ((r - 64.0).powi(2) + (c - 88.0).powi(2)).sqrt() < 30.0;
            let base = if lung { -850.0 } else { 40.0 };
            (base + 60.0 * (r / 9.0).sin() * (c / 13.0).cos()) as i32
        })
        .collect();
    let raw = HuGrid::new(dims, values, Spacing::new(0.7, 0.7))?;
    for (hu, label) in [(-1400.0, "-1400"), (-700.0, "-700"), (0.0, "0")] {
        println!("HU {label:>5} -> {}", tstage::preprocess::window_value(hu, WindowSpec::LUNG));
    }
    let windowed = window_hu(&raw, WindowSpec::LUNG)?;
    let enhanced = clahe(&windowed, ClaheSpec::default())?;
    let dir = std::env::temp_dir().join("tstage_window_clahe");
    std::fs::create_dir_all(&dir)?;
    save_image8(&windowed, dir.join("windowed.png"))?;
    save_image8(&enhanced, dir.join("clahe.png"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
