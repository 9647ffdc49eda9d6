use serde::{Deserialize, Serialize};

use super::{csv, tag, ExperimentConfig, ExperimentKind, Report};
use crate::dynamics::{initial_state, run_ensemble, simulate, Mode};
use crate::forces::{ForceField, SimParams, SystemState};
use crate::rng::StreamRole;
use crate::stats::{bootstrap, ols};
use crate::Result;

/// Tail-window summary of one ensemble functional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalSummary {
    pub name: String,
    /// Mean of the series over the tail window.
    pub plateau: f64,
    pub tail_slope: f64,
    pub tail_slope_stderr: Option<f64>,
    /// `|slope| ≤ k · stderr`.
    pub flat: bool,
    #[serde(skip)]
    pub series: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentRun {
    pub mode: Mode,
    pub n_particles: usize,
    /// Batch period; `None` for the IPS.
    pub tau: Option<f64>,
    pub functionals: Vec<FunctionalSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentsReport {
    pub times: Vec<f64>,
    pub tail_start: f64,
    pub runs: Vec<MomentRun>,
    /// `max/min - 1` of plateau levels over every run, per functional.
    pub level_spread: Vec<(String, f64)>,
    pub all_flat: bool,
    pub warnings: Vec<String>,
}

/// Per-replica record: `(1/N)Σ|xⁱ|` and per-particle `|xⁱ|^α` for every α, per recorded time.
struct ReplicaRecord {
    mean_abs: Vec<f64>,
    powers: Vec<Vec<Vec<f64>>>,
}

fn norms(s: &SystemState) -> impl Iterator<Item = f64> + '_ {
    s.positions().chunks(s.dim()).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn record(params: &SimParams, field: &ForceField, mode: Mode, cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<ReplicaRecord>)> {
    let m = &cfg.moments;
    let runs = run_ensemble(params.n_replicas, cfg.workers, |r| {
        let x0 = initial_state(params, &m.init, r, StreamRole::Init)?;
        let mut rec = ReplicaRecord {
            mean_abs: Vec::new(),
            powers: vec![Vec::new(); m.alphas.len()],
        };
        let mut times = Vec::new();
        simulate(params, field, &x0, mode, r, m.record_stride, |s, _| {
            times.push(s.time);
            rec.mean_abs.push(norms(s).sum::<f64>() / s.n_particles() as f64);
            for (slot, &alpha) in rec.powers.iter_mut().zip(&m.alphas) {
                slot.push(norms(s).map(|v| v.powf(alpha)).collect());
            }
        })?;
        Ok((times, rec))
    })?;
    let times = runs[0].0.clone();
    Ok((times, runs.into_iter().map(|(_, r)| r).collect()))
}

fn mean_abs_series(recs: &[ReplicaRecord], idx: &[usize], n_points: usize) -> Vec<f64> {
    (0..n_points)
        .map(|k| idx.iter().map(|&r| recs[r].mean_abs[k]).sum::<f64>() / idx.len() as f64)
        .collect()
}

fn max_particle_series(recs: &[ReplicaRecord], a: usize, idx: &[usize], n_points: usize) -> Vec<f64> {
    let n = recs[0].powers[a][0].len();
    (0..n_points)
        .map(|k| {
            (0..n)
                .map(|i| idx.iter().map(|&r| recs[r].powers[a][k][i]).sum::<f64>() / idx.len() as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn tail_slope(times: &[f64], series: &[f64], start: usize) -> Option<f64> {
    ols(&times[start..], &series[start..]).map(|f| f.slope)
}

fn summarize(
    name: String,
    times: &[f64],
    start: usize,
    cfg: &ExperimentConfig,
    series_of: impl Fn(&[usize]) -> Vec<f64>,
    replicas: usize,
) -> FunctionalSummary {
    let all: Vec<usize> = (0..replicas).collect();
    let series = series_of(&all);
    let plateau = series[start..].iter().sum::<f64>() / (series.len() - start) as f64;
    let slope = tail_slope(times, &series, start).unwrap_or(f64::NAN);
    let m = &cfg.moments;
    let stderr = bootstrap(replicas, m.bootstrap_resamples, cfg.sim.seed, |idx| tail_slope(times, &series_of(idx), start)).map(|b| b.stderr);
    let flat = stderr.is_some_and(|se| slope.abs() <= m.slope_sigmas * se);
    FunctionalSummary {
        name,
        plateau,
        tail_slope: slope,
        tail_slope_stderr: stderr,
        flat,
        series,
    }
}

/// Ensemble moment time series for the IPS and the RB–IPS over the N and τ
/// grids, with tail-window flatness and plateau comparison.
pub fn run_moment_bound(cfg: &ExperimentConfig) -> Result<MomentsReport> {
    cfg.validate_for(ExperimentKind::Moments)?;
    let m = &cfg.moments;
    let field = cfg.field()?;
    let mut cases: Vec<(Mode, usize, Option<f64>)> = Vec::new();
    for &n in &m.n_values {
        cases.push((Mode::Ips, n, None));
        for &tau in &m.tau_values {
            cases.push((Mode::Rbips, n, Some(tau)));
        }
    }
    let mut times = Vec::new();
    let mut tail_start = 0.0;
    let mut runs = Vec::new();
    for (mode, n, tau) in cases {
        let params = cfg.params(n, cfg.sim.batch_size, tau.unwrap_or(cfg.sim.batch_period));
        params.validate()?;
        let (t, recs) = record(&params, &field, mode, cfg)?;
        let cut = (1.0 - m.tail_fraction) * params.horizon;
        let start = t.iter().position(|&s| s >= cut - 1e-12).unwrap_or(0);
        let points = t.len();
        let replicas = recs.len();
        let mut functionals = vec![summarize("mean_abs".into(), &t, start, cfg, |idx| mean_abs_series(&recs, idx, points), replicas)];
        for (a, &alpha) in m.alphas.iter().enumerate() {
            functionals.push(summarize(
                format!("max_moment_{}", tag(alpha)),
                &t,
                start,
                cfg,
                |idx| max_particle_series(&recs, a, idx, points),
                replicas,
            ));
        }
        tail_start = t[start];
        times = t;
        runs.push(MomentRun { mode, n_particles: n, tau, functionals });
    }
    let mut level_spread = Vec::new();
    for k in 0..runs[0].functionals.len() {
        let levels: Vec<f64> = runs.iter().map(|r| r.functionals[k].plateau).collect();
        let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
        level_spread.push((runs[0].functionals[k].name.clone(), hi / lo - 1.0));
    }
    let mut warnings = Vec::new();
    for r in &runs {
        for f in r.functionals.iter().filter(|f| !f.flat) {
            warnings.push(format!(
                "{} for {:?} at N = {}{}: tail slope {:.3e} is not flat",
                f.name,
                r.mode,
                r.n_particles,
                r.tau.map_or(String::new(), |t| format!(", τ = {t}")),
                f.tail_slope
            ));
        }
    }
    let all_flat = warnings.is_empty();
    Ok(MomentsReport {
        times,
        tail_start,
        runs,
        level_spread,
        all_flat,
        warnings,
    })
}

impl Report for MomentsReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();
        for r in &self.runs {
            let name = match r.tau {
                Some(t) => format!("moments_{:?}_n{}_tau{}.csv", r.mode, r.n_particles, tag(t)).to_lowercase(),
                None => format!("moments_{:?}_n{}.csv", r.mode, r.n_particles).to_lowercase(),
            };
            let header = std::iter::once("t".to_string())
                .chain(r.functionals.iter().map(|f| f.name.clone()))
                .collect::<Vec<_>>()
                .join(",");
            let rows = self.times.iter().enumerate().map(|(k, t)| {
                std::iter::once(t.to_string())
                    .chain(r.functionals.iter().map(|f| f.series[k].to_string()))
                    .collect()
            });
            files.push((name, csv(&header, rows)));
        }
        files.push((
            "moment_plateaus.csv".into(),
            csv(
                "mode,n,tau,functional,plateau,tail_slope,tail_slope_stderr,flat",
                self.runs.iter().flat_map(|r| {
                    r.functionals.iter().map(move |f| {
                        vec![
                            format!("{:?}", r.mode).to_lowercase(),
                            r.n_particles.to_string(),
                            r.tau.map_or("nan".into(), |t| t.to_string()),
                            f.name.clone(),
                            f.plateau.to_string(),
                            f.tail_slope.to_string(),
                            f.tail_slope_stderr.map_or("nan".into(), |s| s.to_string()),
                            f.flat.to_string(),
                        ]
                    })
                }),
            ),
        ));
        files
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_particle_takes_ensemble_mean_first() {
        let recs = vec![
            ReplicaRecord { mean_abs: vec![1.0], powers: vec![vec![vec![4.0, 0.0]]] },
            ReplicaRecord { mean_abs: vec![3.0], powers: vec![vec![vec![0.0, 2.0]]] },
        ];
        assert_eq!(max_particle_series(&recs, 0, &[0, 1], 1), vec![2.0]);
        assert_eq!(mean_abs_series(&recs, &[0, 1], 1), vec![2.0]);
        assert_eq!(max_particle_series(&recs, 0, &[1, 1], 1), vec![2.0]);
    }
}
