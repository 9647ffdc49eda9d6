use serde::{Deserialize, Serialize};

use super::{csv, fit_summary, tag, ExperimentConfig, ExperimentKind, FitSummary, Report};
use crate::dynamics::{initial_state, run_ensemble, simulate_paired_observed};
use crate::forces::{ForceField, SimParams};
use crate::metrics::{half_mean_square_gap, StrongError};
use crate::rng::StreamRole;
use crate::stats::loglog_fit;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauError {
    pub tau: f64,
    pub batch_size: usize,
    pub sup_j: f64,
    pub sup_j_stderr: f64,
    pub sup_time: f64,
    pub pairs_ips: u64,
    pub pairs_rbips: u64,
    #[serde(skip)]
    pub series: Option<StrongError>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrongErrorReport {
    pub tau_sweep: Vec<TauError>,
    /// Slope of `log sup_t J` against `log τ`.
    pub fit: Option<FitSummary>,
    pub p_sweep: Vec<TauError>,
    /// `sup_t J` strictly decreasing along the p sweep.
    pub p_sweep_decreasing: Option<bool>,
    pub warnings: Vec<String>,
}

/// Per-replica gap series plus pair counts of both dynamics.
struct PairedRun {
    gaps: Vec<Vec<f64>>,
    times: Vec<f64>,
    pairs: (u64, u64),
}

fn paired_run(cfg: &ExperimentConfig, field: &ForceField, params: &SimParams) -> Result<PairedRun> {
    let stride = cfg.strong_error.record_stride.max(1);
    let init = &cfg.strong_error.init;
    let per_replica = run_ensemble(params.n_replicas, cfg.workers, |r| {
        let x0 = initial_state(params, init, r, StreamRole::Init)?;
        let mut gaps = Vec::new();
        let pairs = simulate_paired_observed(params, field, &x0, r, stride, |_, x, y| gaps.push(half_mean_square_gap(x, y)))?;
        Ok((gaps, pairs))
    })?;
    let n_points = per_replica[0].0.len();
    let times = (0..n_points).map(|k| (k as u64 * stride) as f64 * params.inner_dt).collect();
    let pairs = per_replica.iter().fold((0, 0), |acc, (_, p)| (acc.0 + p.0, acc.1 + p.1));
    Ok(PairedRun {
        gaps: per_replica.into_iter().map(|(g, _)| g).collect(),
        times,
        pairs,
    })
}

fn sup_over_subset(gaps: &[Vec<f64>], idx: &[usize]) -> f64 {
    let n_points = gaps[0].len();
    (0..n_points)
        .map(|k| idx.iter().map(|&r| gaps[r][k]).sum::<f64>() / idx.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn tau_error(cfg: &ExperimentConfig, field: &ForceField, tau: f64, p: usize) -> Result<(TauError, Vec<Vec<f64>>)> {
    let params = cfg.params(cfg.sim.n_particles, p, tau);
    let run = paired_run(cfg, field, &params)?;
    let series = StrongError::from_gaps(run.times, &run.gaps)?;
    let (sup_time, sup_j, sup_j_stderr) = series.sup();
    Ok((
        TauError {
            tau,
            batch_size: p,
            sup_j,
            sup_j_stderr,
            sup_time,
            pairs_ips: run.pairs.0,
            pairs_rbips: run.pairs.1,
            series: Some(series),
        },
        run.gaps,
    ))
}

/// `sup_{t ≤ T} J(t)` over the τ sweep (and optionally a batch-size sweep)
/// with the log-log order fit.
pub fn run_strong_error(cfg: &ExperimentConfig) -> Result<StrongErrorReport> {
    cfg.validate_for(ExperimentKind::StrongError)?;
    let s = &cfg.strong_error;
    let field = cfg.field()?;
    let mut tau_sweep = Vec::new();
    let mut all_gaps = Vec::new();
    for &tau in &s.tau_values {
        let (row, gaps) = tau_error(cfg, &field, tau, cfg.sim.batch_size)?;
        tau_sweep.push(row);
        all_gaps.push(gaps);
    }
    let taus: Vec<f64> = tau_sweep.iter().map(|r| r.tau).collect();
    let sups: Vec<f64> = tau_sweep.iter().map(|r| r.sup_j).collect();
    let mut warnings = Vec::new();
    let fit = if taus.len() >= 2 {
        match loglog_fit(&taus, &sups) {
            Some(fit) => Some(fit_summary(fit, cfg.sim.n_replicas, s.bootstrap_resamples, cfg.sim.seed, |idx| {
                let ys: Vec<f64> = all_gaps.iter().map(|g| sup_over_subset(g, idx)).collect();
                loglog_fit(&taus, &ys).map(|f| f.slope)
            })),
            None => {
                warnings.push("strong error vanished at some τ; no order fit".into());
                None
            }
        }
    } else {
        None
    };

    let mut p_sweep = Vec::new();
    for &p in &s.p_values {
        if !cfg.sim.n_particles.is_multiple_of(p) || p < 2 {
            return Err(Error::InvalidInput(format!(
                "batch size {p} must be at least 2 and divide N = {}",
                cfg.sim.n_particles
            )));
        }
        p_sweep.push(tau_error(cfg, &field, s.p_sweep_tau, p)?.0);
    }
    let p_sweep_decreasing = (p_sweep.len() >= 2).then(|| p_sweep.windows(2).all(|w| w[1].sup_j < w[0].sup_j));
    Ok(StrongErrorReport {
        tau_sweep,
        fit,
        p_sweep,
        p_sweep_decreasing,
        warnings,
    })
}

impl Report for StrongErrorReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();
        for row in &self.tau_sweep {
            if let Some(series) = &row.series {
                let mut body = Vec::new();
                series.write_csv(&mut body).expect("writing to memory");
                files.push((format!("strong_error_tau{}.csv", tag(row.tau)), String::from_utf8(body).expect("utf-8")));
            }
        }
        let line = |r: &TauError| {
            vec![
                r.tau.to_string(),
                r.batch_size.to_string(),
                r.sup_j.to_string(),
                r.sup_j_stderr.to_string(),
                r.sup_time.to_string(),
            ]
        };
        files.push(("strong_error_sup.csv".into(), csv("tau,p,sup_j,stderr,t_at_sup", self.tau_sweep.iter().map(line))));
        if !self.p_sweep.is_empty() {
            files.push(("strong_error_p_sweep.csv".into(), csv("tau,p,sup_j,stderr,t_at_sup", self.p_sweep.iter().map(line))));
        }
        files
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }
}
