//! T-stage rule engine with an auditable decision trace.
//!
//! Rules are evaluated in a fixed order and the first that holds decides:
//!
//! 1. invasion of any configured structure → T4
//! 2. size > `t3_max_mm` → T4
//! 3. size > `t2_max_mm` → T3
//! 4. size > `t1_max_mm` → T2
//! 5. surrounded by lung → T1
//! 6. otherwise → `small_unsurrounded_stage`
//!
//! Upper bounds are inclusive: a 30.0 mm tumor is at most T1 by size.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{measure_study, MeasureParams, SliceMeasurements, TumorProperties, Warning};
use crate::anatomy::{ContainmentParams, DiaphragmParams};
use crate::ingest::Study;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TStage {
    T1,
    T2,
    T3,
    T4,
}

impl TStage {
    pub const ALL: [TStage; 4] = [TStage::T1, TStage::T2, TStage::T3, TStage::T4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TStage::T1 => "T1",
            TStage::T2 => "T2",
            TStage::T3 => "T3",
            TStage::T4 => "T4",
        }
    }
}

impl fmt::Display for TStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" => Ok(TStage::T1),
            "T2" => Ok(TStage::T2),
            "T3" => Ok(TStage::T3),
            "T4" => Ok(TStage::T4),
            other => Err(Error::validation("stage", format!("unknown T-stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvadedStructure {
    Mediastinum,
    Diaphragm,
    LungWall,
}

impl InvadedStructure {
    fn name(self) -> &'static str {
        match self {
            InvadedStructure::Mediastinum => "mediastinum",
            InvadedStructure::Diaphragm => "diaphragm",
            InvadedStructure::LungWall => "lung_wall",
        }
    }

    fn flag(self, props: &TumorProperties) -> bool {
        match self {
            InvadedStructure::Mediastinum => props.invades_mediastinum,
            InvadedStructure::Diaphragm => props.invades_diaphragm,
            InvadedStructure::LungWall => props.invades_lung_wall,
        }
    }
}

/// Staging thresholds. Fields missing from a rules file keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StagingRules {
    pub t1_max_mm: f64,
    pub t2_max_mm: f64,
    pub t3_max_mm: f64,
    pub invasion_threshold_mm: f64,
    pub invading_structures: BTreeSet<InvadedStructure>,
    pub small_unsurrounded_stage: TStage,
}

impl Default for StagingRules {
    fn default() -> Self {
        StagingRules {
            t1_max_mm: 30.0,
            t2_max_mm: 50.0,
            t3_max_mm: 70.0,
            invasion_threshold_mm: 0.0,
            invading_structures: [InvadedStructure::Mediastinum, InvadedStructure::Diaphragm].into(),
            small_unsurrounded_stage: TStage::T2,
        }
    }
}

impl StagingRules {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t1_max_mm && self.t1_max_mm < self.t2_max_mm && self.t2_max_mm < self.t3_max_mm) {
            return Err(Error::validation(
                "t1_max_mm",
                "thresholds must satisfy 0 < t1_max_mm < t2_max_mm < t3_max_mm",
            ));
        }
        if !(self.invasion_threshold_mm >= 0.0) {
            return Err(Error::validation("invasion_threshold_mm", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub condition: String,
    pub value: String,
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDecision {
    pub stage: TStage,
    pub fired_rule: String,
    pub trace: Vec<TraceStep>,
}

struct Tracer(Vec<TraceStep>);

impl Tracer {
    fn check(&mut self, condition: impl Into<String>, value: impl Into<String>, outcome: bool) -> bool {
        self.0.push(TraceStep {
            condition: condition.into(),
            value: value.into(),
            outcome,
        });
        outcome
    }
}

pub fn classify(props: &TumorProperties, rules: &StagingRules) -> Result<StageDecision> {
    rules.validate()?;
    if !(props.size_mm > 0.0) {
        return Err(Error::InvalidProperties(format!("size_mm = {} must be > 0", props.size_mm)));
    }
    let mut t = Tracer(Vec::new());
    let decide = |t: Tracer, stage: TStage, rule: &str| StageDecision {
        stage,
        fired_rule: rule.to_string(),
        trace: t.0,
    };

    for &s in &rules.invading_structures {
        let flag = s.flag(props);
        if t.check(format!("invades_{}", s.name()), flag.to_string(), flag) {
            return Ok(decide(t, TStage::T4, &format!("invasion:{}", s.name())));
        }
    }
    let size = props.size_mm;
    let brackets = [
        (rules.t3_max_mm, TStage::T4, "size_gt_t3_max"),
        (rules.t2_max_mm, TStage::T3, "size_gt_t2_max"),
        (rules.t1_max_mm, TStage::T2, "size_gt_t1_max"),
    ];
    for (limit, stage, rule) in brackets {
        if t.check(format!("size_mm > {limit}"), format!("{size}"), size > limit) {
            return Ok(decide(t, stage, rule));
        }
    }
    let value = if props.lung_mask_available {
        props.surrounded_by_lung.to_string()
    } else {
        "false (no lung mask on any tumor slice)".to_string()
    };
    if t.check("surrounded_by_lung", value, props.surrounded_by_lung) {
        Ok(decide(t, TStage::T1, "small_surrounded"))
    } else {
        Ok(decide(t, rules.small_unsurrounded_stage, "small_unsurrounded"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub study_id: String,
    pub rules: StagingRules,
    pub properties: TumorProperties,
    pub decision: StageDecision,
    pub slices: Vec<SliceMeasurements>,
    pub warnings: Vec<Warning>,
}

impl StageReport {
    pub fn stage(&self) -> TStage {
        self.decision.stage
    }
}

/// Measures the study and classifies it.
pub fn stage_study(
    study: &Study,
    rules: &StagingRules,
    diaphragm: DiaphragmParams,
    containment: ContainmentParams,
) -> Result<StageReport> {
    rules.validate()?;
    let params = MeasureParams {
        diaphragm,
        containment,
        invasion_threshold_mm: rules.invasion_threshold_mm,
    };
    let measured = measure_study(study, &params)?;
    let decision = classify(&measured.properties, rules)?;
    let mut warnings = measured.warnings;
    if !measured.properties.lung_mask_available && decision.fired_rule.starts_with("small_") {
        warnings.push(Warning {
            slice_index: None,
            message: "missing structure: lung; a T1 decision needs a lung mask, surrounded_by_lung treated as false"
                .into(),
        });
    }
    Ok(StageReport {
        study_id: study.study_id().to_string(),
        rules: rules.clone(),
        properties: measured.properties,
        decision,
        slices: measured.slices,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn props(size: f64) -> TumorProperties {
        TumorProperties {
            size_mm: size,
            in_plane_max_mm: size,
            depth_mm: 0.0,
            dist_lung_wall_mm: Some(5.0),
            dist_mediastinum_mm: Some(5.0),
            dist_diaphragm_mm: Some(5.0),
            invades_lung_wall: false,
            invades_mediastinum: false,
            invades_diaphragm: false,
            surrounded_by_lung: true,
            lung_mask_available: true,
            n_tumor_slices: 1,
            satellite_components: 0,
        }
    }

    fn stage(p: &TumorProperties) -> TStage {
        classify(p, &StagingRules::default()).unwrap().stage
    }

    #[test]
    fn bracket_examples() {
        let mut p = props(60.0);
        p.surrounded_by_lung = false;
        assert_eq!(stage(&p), TStage::T3);
        p.invades_mediastinum = true;
        assert_eq!(stage(&p), TStage::T4);
        assert_eq!(stage(&props(20.0)), TStage::T1);
        assert_eq!(stage(&props(45.0)), TStage::T2);
        assert_eq!(stage(&props(30.0)), TStage::T1);
        assert_eq!(stage(&props(30.000001)), TStage::T2);
        assert_eq!(stage(&props(70.0)), TStage::T3);
        assert_eq!(stage(&props(80.0)), TStage::T4);
    }

    #[test]
    fn small_unsurrounded_falls_back() {
        let mut p = props(20.0);
        p.surrounded_by_lung = false;
        let d = classify(&p, &StagingRules::default()).unwrap();
        assert_eq!(d.stage, TStage::T2);
        assert_eq!(d.fired_rule, "small_unsurrounded");
        let rules = StagingRules { small_unsurrounded_stage: TStage::T1, ..Default::default() };
        assert_eq!(classify(&p, &rules).unwrap().stage, TStage::T1);
    }

    #[test]
    fn lung_wall_only_triggers_when_configured() {
        let mut p = props(20.0);
        p.invades_lung_wall = true;
        p.surrounded_by_lung = false;
        assert_eq!(stage(&p), TStage::T2);
        let mut rules = StagingRules::default();
        rules.invading_structures.insert(InvadedStructure::LungWall);
        let d = classify(&p, &rules).unwrap();
        assert_eq!(d.stage, TStage::T4);
        assert_eq!(d.fired_rule, "invasion:lung_wall");
    }

    #[test]
    fn trace_records_every_evaluated_condition() {
        let d = classify(&props(20.0), &StagingRules::default()).unwrap();
        let conds: Vec<&str> = d.trace.iter().map(|s| s.condition.as_str()).collect();
        assert_eq!(
            conds,
            vec![
                "invades_mediastinum",
                "invades_diaphragm",
                "size_mm > 70",
                "size_mm > 50",
                "size_mm > 30",
                "surrounded_by_lung"
            ]
        );
        assert_eq!(d.trace.iter().filter(|s| s.outcome).count(), 1);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(classify(&props(0.0), &StagingRules::default()), Err(Error::InvalidProperties(_))));
        let bad = StagingRules { t2_max_mm: 20.0, ..Default::default() };
        assert!(matches!(classify(&props(10.0), &bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn rules_file_overrides_fields_individually() {
        let r: StagingRules = serde_json::from_str(r#"{"t1_max_mm": 25, "invading_structures": ["lung_wall"]}"#).unwrap();
        assert_eq!(r.t1_max_mm, 25.0);
        assert_eq!(r.t2_max_mm, 50.0);
        assert_eq!(r.invading_structures, [InvadedStructure::LungWall].into());
    }

    fn arb_props() -> impl Strategy<Value = TumorProperties> {
        (0.01f64..150.0, any::<[bool; 4]>()).prop_map(|(size, f)| {
            let mut p = props(size);
            p.invades_mediastinum = f[0];
            p.invades_diaphragm = f[1];
            p.invades_lung_wall = f[2];
            p.surrounded_by_lung = f[3];
            p
        })
    }

    proptest! {
        #[test]
        fn total_and_deterministic(p in arb_props()) {
            let a = classify(&p, &StagingRules::default()).unwrap();
            let b = classify(&p, &StagingRules::default()).unwrap();
            prop_assert!(!a.trace.is_empty());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn monotone_in_size(p in arb_props(), extra in 0.0f64..100.0) {
            let mut p = p;
            p.invades_mediastinum = false;
            p.invades_diaphragm = false;
            let mut q = p.clone();
            q.size_mm += extra;
            prop_assert!(stage(&q) >= stage(&p));
        }

        #[test]
        fn invasion_dominates(p in arb_props(), which in 0usize..2) {
            let mut p = p;
            if which == 0 { p.invades_mediastinum = true } else { p.invades_diaphragm = true }
            prop_assert_eq!(stage(&p), TStage::T4);
        }
    }
}
