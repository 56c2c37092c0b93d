//! Overriding staging thresholds and the set of invading structures.

use tstage::anatomy::{ContainmentParams, DiaphragmParams};
use tstage::ingest::{Dims, Spacing};
use tstage::phantom::{generate_study, PhantomSpec};
use tstage::staging::{classify, stage_study, InvadedStructure, StagingRules};

fn main() -> tstage::Result<()> {
    let spec = PhantomSpec::standard(Dims::new(200, 200), 20, Spacing::new(0.8, 0.8), 14.0);
    let study = generate_study(&spec)?;
    let report = stage_study(&study, &StagingRules::default(), DiaphragmParams::default(), ContainmentParams::default())?;
    println!("default rules: {} ({})", report.stage(), report.decision.fired_rule);

    let strict = StagingRules { t1_max_mm: 20.0, t2_max_mm: 25.0, t3_max_mm: 40.0, ..StagingRules::default() };
    let d = classify(&report.properties, &strict)?;
    println!("strict sizes:  {} ({})", d.stage, d.fired_rule);

    let mut wall = StagingRules::default();
    wall.invading_structures.insert(InvadedStructure::LungWall);
    wall.invasion_threshold_mm = 3.0;
    let r = stage_study(&study, &wall, DiaphragmParams::default(), ContainmentParams::default())?;
    println!("wall counts, 3 mm margin: {} ({})", r.stage(), r.decision.fired_rule);
    println!("rules file form:\n{}", serde_json::to_string_pretty(&wall).unwrap());
    Ok(())
}
