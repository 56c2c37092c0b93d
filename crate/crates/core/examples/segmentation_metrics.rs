//! Pixel metrics between a predicted and a reference mask.

use tstage::ingest::{BinaryMask, Dims, Spacing};
use tstage::metrics::{confusion_counts, seg_metrics, seg_table_csv};

fn disk(dims: Dims, cr: f64, cc: f64, radius: f64) -> BinaryMask {
    BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| (r as f64 - cr).hypot(c as f64 - cc) <= radius)
}

fn main() -> tstage::Result<()> {
    let dims = Dims::new(64, 64);
    let gt = disk(dims, 32.0, 32.0, 14.0);
    let mut rows = Vec::new();
    for (name, pred) in [
        ("exact", gt.clone()),
        ("shifted", disk(dims, 35.0, 30.0, 14.0)),
        ("undersized", disk(dims, 32.0, 32.0, 9.0)),
        ("empty", BinaryMask::new(dims, Spacing::UNIT)),
    ] {
        let counts = confusion_counts(&pred, &gt)?;
        println!("{name:>10}: {counts:?}");
        rows.push((name.to_string(), seg_metrics(&counts)));
    }
    print!("{}", seg_table_csv(&rows));
    Ok(())
}
