//! Generates a synthetic study, stages it, and compares with the phantom's
//! own brute-force answer.

use tstage::anatomy::{ContainmentParams, DiaphragmParams};
use tstage::ingest::{Dims, Spacing};
use tstage::phantom::{generate_phantom, PhantomSpec};
use tstage::staging::{stage_study, StagingRules};

fn main() -> tstage::Result<()> {
    for radius_mm in [8.0, 20.0, 30.0] {
        let spec = PhantomSpec::standard(Dims::new(256, 256), 30, Spacing::new(0.8, 0.8), radius_mm);
        let (study, truth) = generate_phantom(&spec)?;
        let report = stage_study(&study, &StagingRules::default(), DiaphragmParams::default(), ContainmentParams::default())?;
        println!(
            "radius {radius_mm:>4} mm: size {:.1} mm, stage {} via {} (oracle {} via {})",
            report.properties.size_mm,
            report.stage(),
            report.decision.fired_rule,
            truth.stage,
            truth.fired_rule,
        );
        for step in &report.decision.trace {
            println!("    {} = {} -> {}", step.condition, step.value, step.outcome);
        }
    }
    Ok(())
}
