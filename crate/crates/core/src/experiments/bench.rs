use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{csv, ExperimentConfig, ExperimentKind, Report};
use crate::dynamics::{initial_state, Mode, Simulation};
use crate::rng::StreamRole;
use crate::stats::loglog_fit;
use crate::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_particles: usize,
    pub mode: Mode,
    pub batch_size: usize,
    pub pairs_per_step: u64,
    /// `N(N-1)` for the IPS, `N(p-1)` for the RB–IPS.
    pub expected_pairs: u64,
    #[serde(skip)]
    pub steps: u64,
    #[serde(skip)]
    pub seconds_per_step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub counters_exact: bool,
    pub warnings: Vec<String>,
}

impl BenchReport {
    /// Log-log slope of seconds per step against N for one mode and batch rule.
    pub fn slope(&self, mode: Mode, full_batch: bool) -> Option<f64> {
        let rows: Vec<&BenchRow> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode && (mode == Mode::Ips || (r.batch_size == r.n_particles) == full_batch))
            .collect();
        let n: Vec<f64> = rows.iter().map(|r| r.n_particles as f64).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.seconds_per_step).collect();
        loglog_fit(&n, &t).map(|f| f.slope)
    }
}

/// Pair counters and per-step wall-clock of the IPS and the RB–IPS over N.
pub fn run_cost_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate_for(ExperimentKind::Bench)?;
    let b = &cfg.bench;
    let field = cfg.field()?;
    let mut rows = Vec::new();
    for &n in &b.n_values {
        let mut cases = vec![(Mode::Ips, cfg.sim.batch_size), (Mode::Rbips, cfg.sim.batch_size)];
        if b.full_batch && n != cfg.sim.batch_size {
            cases.push((Mode::Rbips, n));
        }
        for (mode, p) in cases {
            let params = cfg.params(n, p, cfg.sim.batch_period);
            params.validate()?;
            let x0 = initial_state(&params, &crate::dynamics::Init::Gaussian { mean: 0.0, std: 1.0 }, 0, StreamRole::Init)?;
            let mut sim = Simulation::new(&params, &field, x0, mode, 0)?;
            let start = Instant::now();
            let mut steps = 0u64;
            while steps < b.min_steps || start.elapsed().as_secs_f64() < b.min_seconds {
                sim.advance()?;
                steps += 1;
            }
            let elapsed = start.elapsed().as_secs_f64();
            let nn = n as u64;
            rows.push(BenchRow {
                n_particles: n,
                mode,
                batch_size: p,
                pairs_per_step: sim.pair_evaluations() / steps,
                expected_pairs: match mode {
                    Mode::Ips => nn * (nn - 1),
                    Mode::Rbips => nn * (p as u64 - 1),
                },
                steps,
                seconds_per_step: elapsed / steps as f64,
            });
        }
    }
    let warnings: Vec<String> = rows
        .iter()
        .filter(|r| r.pairs_per_step != r.expected_pairs)
        .map(|r| format!("{:?} N = {}: {} pairs per step, expected {}", r.mode, r.n_particles, r.pairs_per_step, r.expected_pairs))
        .collect();
    Ok(BenchReport {
        counters_exact: warnings.is_empty(),
        rows,
        warnings,
    })
}

impl Report for BenchReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        vec![(
            "pair_counts.csv".into(),
            csv(
                "n,mode,p,pairs_per_step,expected_pairs",
                self.rows.iter().map(|r| {
                    vec![
                        r.n_particles.to_string(),
                        format!("{:?}", r.mode).to_lowercase(),
                        r.batch_size.to_string(),
                        r.pairs_per_step.to_string(),
                        r.expected_pairs.to_string(),
                    ]
                }),
            ),
        )]
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    fn timings(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            let key = format!("{:?}_n{}_p{}", r.mode, r.n_particles, r.batch_size).to_lowercase();
            out.insert(format!("{key}_seconds_per_step"), r.seconds_per_step);
            out.insert(format!("{key}_steps"), r.steps as f64);
        }
        if let Some(s) = self.slope(Mode::Ips, false) {
            out.insert("slope_ips".into(), s);
        }
        if let Some(s) = self.slope(Mode::Rbips, false) {
            out.insert("slope_rbips".into(), s);
        }
        if let Some(s) = self.slope(Mode::Rbips, true) {
            out.insert("slope_rbips_full_batch".into(), s);
        }
        out
    }
}
