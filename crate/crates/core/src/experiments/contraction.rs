use serde::{Deserialize, Serialize};

use super::{csv, geometry, Constants, ExperimentConfig, ExperimentKind, Report};
use crate::coupling::{contraction_experiment, ContractionOptions, CouplingMode, DecaySeries};
use crate::distance::m_delta;
use crate::dynamics::Mode;
use crate::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub mode: Mode,
    pub n_particles: usize,
    pub fitted_rate: Option<f64>,
    pub fitted_rate_stderr: Option<f64>,
    pub fit_points: usize,
    /// Tight envelope `e^{-ct}ρ₀ + m(δ)(1 - e^{-ct})/c` within the tolerance.
    pub envelope_ok: bool,
    /// Loose envelope `e^{-ct}ρ₀ + m(δ)/c` within the tolerance.
    pub envelope_loose_ok: bool,
    /// Largest `(E[ρ_t] - loose envelope)/stderr` over the run.
    pub worst_excess: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub constants: Constants,
    pub rates: Vec<RateRow>,
    /// Per mode: largest over smallest fitted rate across the N sweep.
    pub rate_spread: Vec<(Mode, Option<f64>)>,
    /// `(δ, m(δ))` for the configured δ sweep.
    pub delta_sweep: Vec<(f64, f64)>,
    /// `false` whenever the smallness condition fails for an interacting field.
    pub validates_theory: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub series: Vec<DecaySeries>,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Ips => "ips",
        Mode::Rbips => "rbips",
    }
}

/// Coupled contraction runs for every `(mode, N)` of the sweep.
pub fn run_contraction(cfg: &ExperimentConfig) -> Result<ContractionReport> {
    cfg.validate_for(ExperimentKind::Contraction)?;
    let c = &cfg.contraction;
    let field = cfg.field()?;
    let geo = geometry(&field, &cfg.distance, c.delta_factor)?;
    let opts = ContractionOptions {
        delta: Some(geo.constants.delta),
        record_stride: c.record_stride,
        fit_fraction: c.fit_fraction,
        workers: cfg.workers,
    };
    let mut series = Vec::new();
    let mut rates = Vec::new();
    let mut warnings = Vec::new();
    for &mode in &c.modes {
        for &n in &c.n_values {
            let params = cfg.params(n, cfg.sim.batch_size, cfg.sim.batch_period);
            let coupling = match mode {
                Mode::Ips => CouplingMode::Ips,
                Mode::Rbips => CouplingMode::Rbips,
            };
            let s = contraction_experiment(&params, &field, &geo.spec, &geo.df, &c.init_x, &c.init_y, &coupling, &opts)?;
            if let Some(w) = &s.warning {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
            rates.push(RateRow {
                mode,
                n_particles: n,
                fitted_rate: s.fitted_rate,
                fitted_rate_stderr: s.fitted_rate_stderr,
                fit_points: s.fit_points,
                envelope_ok: s.within_envelope(c.envelope_sigmas, false),
                envelope_loose_ok: s.within_envelope(c.envelope_sigmas, true),
                worst_excess: s.worst_excess(true),
            });
            series.push(s);
        }
    }
    let rate_spread = c
        .modes
        .iter()
        .map(|&mode| {
            let r: Vec<f64> = rates.iter().filter(|row| row.mode == mode).filter_map(|row| row.fitted_rate).collect();
            let spread = if r.len() == c.n_values.len() && r.iter().all(|v| *v > 0.0) {
                let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
                Some(hi / lo)
            } else {
                None
            };
            (mode, spread)
        })
        .collect();
    let delta_sweep = c
        .delta_sweep
        .iter()
        .map(|&k| {
            let delta = k * geo.constants.r1;
            Ok((delta, m_delta(&geo.df, &geo.spec, field.sigma, delta)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionReport {
        validates_theory: warnings.is_empty(),
        constants: geo.constants,
        rates,
        rate_spread,
        delta_sweep,
        warnings,
        series,
    })
}

impl Report for ContractionReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        let mut files: Vec<(String, String)> = self
            .series
            .iter()
            .zip(&self.rates)
            .map(|(s, row)| {
                let mut body = Vec::new();
                s.write_csv(&mut body).expect("writing to memory");
                (
                    format!("decay_{}_n{}.csv", mode_name(row.mode), row.n_particles),
                    String::from_utf8(body).expect("utf-8"),
                )
            })
            .collect();
        files.push((
            "rates.csv".into(),
            csv(
                "mode,n,fitted_rate,stderr,envelope_ok,envelope_loose_ok",
                self.rates.iter().map(|r| {
                    vec![
                        mode_name(r.mode).into(),
                        r.n_particles.to_string(),
                        r.fitted_rate.map_or("nan".into(), |v| v.to_string()),
                        r.fitted_rate_stderr.map_or("nan".into(), |v| v.to_string()),
                        r.envelope_ok.to_string(),
                        r.envelope_loose_ok.to_string(),
                    ]
                }),
            ),
        ));
        files.push((
            "m_delta.csv".into(),
            csv("delta,m_delta", self.delta_sweep.iter().map(|(d, m)| vec![d.to_string(), m.to_string()])),
        ));
        files
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }
}
