use serde::{Deserialize, Serialize};

use super::{geometry, Constants, ExperimentConfig, ExperimentKind, Report};
use crate::distance::{DistanceHeader, InvariantReport};
use crate::forces::{validate_assumptions, AssumptionReport, ValidationGrid};
use crate::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceReport {
    pub constants: Constants,
    pub header: DistanceHeader,
    pub invariants: InvariantReport,
    pub invariants_hold: bool,
    #[serde(skip)]
    pub table: String,
}

/// Builds the distance function for the configured drift and tabulates it.
pub fn run_build_distance(cfg: &ExperimentConfig) -> Result<DistanceReport> {
    cfg.validate_for(ExperimentKind::BuildDistance)?;
    let field = cfg.field()?;
    let g = geometry(&field, &cfg.distance, cfg.contraction.delta_factor)?;
    let mut table = Vec::new();
    g.df.write_csv(&mut table)?;
    let invariants = g.df.check_invariants(&g.spec);
    Ok(DistanceReport {
        header: g.df.header(),
        invariants_hold: invariants.holds(),
        invariants,
        constants: g.constants,
        table: String::from_utf8(table).expect("CSV is UTF-8"),
    })
}

impl Report for DistanceReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        vec![("distance.csv".into(), self.table.clone())]
    }

    fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.invariants_hold {
            out.push("distance function invariants do not hold".into());
        }
        if self.constants.smallness_ok == Some(false) {
            out.push("interaction violates the smallness condition".into());
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub assumptions: AssumptionReport,
    pub constants: Option<Constants>,
}

/// Grid checks of the standing assumptions for the configured field.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    cfg.validate_for(ExperimentKind::Validate)?;
    let field = cfg.field()?;
    let constants = match field.kappa {
        Some(_) => Some(geometry(&field, &cfg.distance, cfg.contraction.delta_factor)?.constants),
        None => None,
    };
    let assumptions = validate_assumptions(&field, &ValidationGrid::default(), constants.as_ref().map(|c| (c.c0, c.phi0)));
    Ok(ValidationReport { assumptions, constants })
}

impl Report for ValidationReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    fn warnings(&self) -> Vec<String> {
        let mut out = self.assumptions.notes.clone();
        if !self.assumptions.passed() {
            out.push("one or more standing assumptions failed".into());
        }
        out
    }
}
