//! The diaphragm band estimated from a dome-shaped lung, printed as ASCII.

use tstage::anatomy::{estimate_diaphragm, DiaphragmParams};
use tstage::ingest::{BinaryMask, Dims, Spacing};

fn main() -> tstage::Result<()> {
    let dims = Dims::new(30, 50);
    let lung = BinaryMask::from_fn(dims, Spacing::UNIT, |r, c| {
        let x = (c as f64 - 25.0) / 20.0;
        (5..45).contains(&c) && r >= 2 && (r as f64) <= 18.0 + 9.0 * (1.0 - x * x).max(0.0).sqrt()
    });
    let band = estimate_diaphragm(&lung, DiaphragmParams::default())?;
    for r in 0..dims.rows {
        let line: String = (0..dims.cols)
            .map(|c| match (band.get(r, c), lung.get(r, c)) {
                (true, _) => '#',
                (false, true) => '.',
                _ => ' ',
            })
            .collect();
        println!("{line}");
    }
    println!("{} band pixels", band.count());
    Ok(())
}
