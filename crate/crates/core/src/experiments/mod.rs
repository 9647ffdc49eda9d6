//! Config-driven experiment runners. Each runner returns a typed report;
//! [`write_run`] turns a report into `summary.json`, CSV series and a
//! separate `timings.json`.

mod bench;
mod config;
mod contraction;
mod invariant;
mod moments;
mod strong;
mod tools;
mod unbiased;

pub use bench::{run_cost_bench, BenchReport, BenchRow};
pub use config::{
    BenchConfig, ContractionConfig, DriftConfig, ExperimentConfig, FieldConfig, InteractionConfig, InvariantBiasConfig,
    MomentsConfig, StrongErrorConfig, UnbiasednessConfig,
};
pub use contraction::{run_contraction, ContractionReport, RateRow};
pub use invariant::{run_invariant_bias, stationary_ensemble, InvariantBiasReport, OracleComparison, StationaryEnsemble, TauDistance};
pub use moments::{run_moment_bound, MomentRun, MomentsReport};
pub use strong::{run_strong_error, StrongErrorReport, TauError};
pub use tools::{run_build_distance, run_validate, DistanceReport, ValidationReport};
pub use unbiased::{run_unbiasedness, UnbiasednessReport, UnbiasednessRow};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::{build_distance, m_delta, DistanceFunction, DistanceOptions, KappaSpec};
use crate::forces::ForceField;
use crate::stats::{bootstrap, LinearFit};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Contraction,
    StrongError,
    InvariantBias,
    Unbiasedness,
    Moments,
    Bench,
    BuildDistance,
    Validate,
}

/// Constants of the distance function for the configured field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub r0: f64,
    pub r1: f64,
    pub c0: f64,
    pub phi0: f64,
    pub eta: f64,
    /// Contraction rate `c₀ σ² / 2`.
    pub c: f64,
    pub delta: f64,
    pub m_delta: f64,
    pub lk_bound: Option<f64>,
    pub smallness_threshold: f64,
    pub smallness_ok: Option<bool>,
}

pub(crate) struct Geometry {
    pub constants: Constants,
    pub spec: KappaSpec,
    pub df: DistanceFunction,
}

pub(crate) fn geometry(field: &ForceField, opts: &DistanceOptions, delta_factor: f64) -> Result<Geometry> {
    let spec = field
        .kappa
        .clone()
        .ok_or_else(|| Error::InvalidInput("the configured drift has no curvature profile".into()))?;
    let df = build_distance(&spec, opts)?;
    let delta = delta_factor * df.r1;
    let constants = Constants {
        r0: df.r0,
        r1: df.r1,
        c0: df.c0,
        phi0: df.phi0,
        eta: df.eta,
        c: df.contraction_rate(field.sigma),
        delta,
        m_delta: m_delta(&df, &spec, field.sigma, delta)?,
        lk_bound: field.lk_bound,
        smallness_threshold: field.smallness_threshold(df.c0, df.phi0),
        smallness_ok: field.satisfies_smallness(df.c0, df.phi0),
    };
    Ok(Geometry { constants, spec, df })
}

/// Log-log least-squares fit with a bootstrap standard error over replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub ols_stderr: f64,
    pub bootstrap_stderr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_points: usize,
    pub resamples: usize,
    pub replicas: usize,
}

pub(crate) fn fit_summary(
    fit: LinearFit,
    replicas: usize,
    resamples: usize,
    seed: u64,
    slope_of: impl Fn(&[usize]) -> Option<f64>,
) -> FitSummary {
    let boot = if resamples > 0 { bootstrap(replicas, resamples, seed, slope_of) } else { None };
    FitSummary {
        slope: fit.slope,
        intercept: fit.intercept,
        ols_stderr: fit.slope_stderr,
        bootstrap_stderr: boot.as_ref().map(|b| b.stderr),
        ci_low: boot.as_ref().map(|b| b.ci_low),
        ci_high: boot.as_ref().map(|b| b.ci_high),
        n_points: fit.n,
        resamples: boot.as_ref().map_or(0, |b| b.resamples),
        replicas,
    }
}

/// A report that can be written to disk.
pub trait Report: Serialize {
    /// `(file name, contents)` of every CSV series.
    fn csv_files(&self) -> Vec<(String, String)>;
    fn warnings(&self) -> Vec<String>;
    fn timings(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

/// Contents of `summary.json`.
#[derive(Serialize)]
pub struct RunSummary<'a, R: Serialize> {
    pub experiment: ExperimentKind,
    pub config: &'a ExperimentConfig,
    /// Distance constants of the configured field, when it has a curvature profile.
    pub constants: Option<Constants>,
    pub warnings: Vec<String>,
    pub result: &'a R,
    pub timings_file: &'static str,
}

/// Writes `summary.json`, the report's CSV files and `timings.json` into `dir`.
pub fn write_run<R: Report>(kind: ExperimentKind, config: &ExperimentConfig, report: &R, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in report.csv_files() {
        std::fs::write(dir.join(name), body)?;
    }
    let constants = match config.field() {
        Ok(field) if field.kappa.is_some() => Some(geometry(&field, &config.distance, config.contraction.delta_factor)?.constants),
        _ => None,
    };
    let summary = RunSummary {
        experiment: kind,
        config,
        constants,
        warnings: report.warnings(),
        result: report,
        timings_file: "timings.json",
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&report.timings())? + "\n")?;
    Ok(())
}

/// Builds a CSV body from a header and rows of already formatted fields.
pub(crate) fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Tag used in file names: `0.025` becomes `0.025`, `1e-3` becomes `0.001`.
pub(crate) fn tag(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_for_default_field() {
        let cfg = ExperimentConfig::default();
        let field = cfg.field().unwrap();
        let g = geometry(&field, &cfg.distance, 0.01).unwrap();
        assert!((g.constants.r1 - 3.73032).abs() < 1e-4);
        assert!((g.constants.c0 - 0.130167).abs() < 1e-5);
        assert_eq!(g.constants.smallness_ok, Some(true));
    }

    #[test]
    fn csv_layout() {
        let body = csv("a,b", vec![vec!["1".into(), "2".into()]]);
        assert_eq!(body, "a,b\n1,2\n");
        assert_eq!(tag(0.025), "0.025");
    }
}
