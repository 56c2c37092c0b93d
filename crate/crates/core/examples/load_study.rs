//! Writes a phantom to disk, loads it back through its manifest, and saves
//! the report and overlays.

use tstage::anatomy::{ContainmentParams, DiaphragmParams};
use tstage::ingest::{assemble_study, load_manifest, Dims, Spacing};
use tstage::phantom::{write_phantom, PhantomSpec};
use tstage::report::{write_overlays, StageReportFile};
use tstage::staging::{stage_study, StagingRules};

fn main() -> tstage::Result<()> {
    let dir = std::env::temp_dir().join("tstage_load_study");
    let spec = PhantomSpec::standard(Dims::new(128, 128), 12, Spacing::new(0.9, 0.9), 12.0);
    let manifest_path = write_phantom(&spec, &dir)?;
    let manifest = load_manifest(&manifest_path)?;
    let study = assemble_study(&manifest)?;
    println!("{}: {} slices, tumor on {:?}", study.study_id(), study.len(), study.tumor_slices());

    let report = stage_study(&study, &StagingRules::default(), DiaphragmParams::default(), ContainmentParams::default())?;
    let file = StageReportFile::new(report);
    file.save(dir.join("report.json"))?;
    let overlays = write_overlays(&study, DiaphragmParams::default(), dir.join("overlays"))?;
    println!("stage {}; report and {} overlays in {}", file.report.stage(), overlays.len(), dir.display());
    Ok(())
}
