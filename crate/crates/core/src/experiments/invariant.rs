use serde::{Deserialize, Serialize};

use super::{csv, fit_summary, geometry, ExperimentConfig, ExperimentKind, FitSummary, Report};
use crate::dynamics::{initial_state, run_ensemble, Init, Mode, Simulation};
use crate::forces::{ForceField, SimParams, SystemState};
use crate::metrics::{invariant_oracle_n2, w1_exact, w1_marginal, EmpiricalMeasure, OracleReport, MAX_EXACT_SAMPLES};
use crate::rng::StreamRole;
use crate::stats::{loglog_fit, mean_stderr};
use crate::{Error, Result};

/// Replica indices of ensemble `e` start at `e · ENSEMBLE_STRIDE`.
const ENSEMBLE_STRIDE: u64 = 1 << 32;

/// Samples collected after burn-in, replica-major.
#[derive(Clone, Debug)]
pub struct StationaryEnsemble {
    pub samples: Vec<SystemState>,
    pub samples_per_replica: usize,
    /// Mean over replicas of `(1/N)Σ|xⁱ|` in the second half of the
    /// collection window minus the first half, with its standard error.
    /// With one sample per replica the first half is the state at half the burn-in.
    pub drift: (f64, f64),
    pub pair_evaluations: u64,
}

impl StationaryEnsemble {
    pub fn n_replicas(&self) -> usize {
        self.samples.len() / self.samples_per_replica
    }

    /// Flagged when the two halves differ by more than three standard errors.
    pub fn nonstationary(&self) -> bool {
        self.drift.0.abs() > 3.0 * self.drift.1
    }

    fn replica(&self, r: usize) -> &[SystemState] {
        &self.samples[r * self.samples_per_replica..(r + 1) * self.samples_per_replica]
    }
}

fn mean_abs(s: &SystemState) -> f64 {
    let d = s.dim();
    s.positions().chunks(d).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / s.n_particles() as f64
}

/// Runs `params.n_replicas` replicas, discards `burn_in`, then keeps
/// `samples_per_replica` states spaced by `thin`. `ensemble` selects a
/// disjoint block of replica streams.
#[allow(clippy::too_many_arguments)]
pub fn stationary_ensemble(
    params: &SimParams,
    field: &ForceField,
    mode: Mode,
    init: &Init,
    burn_in: f64,
    thin: f64,
    samples_per_replica: usize,
    ensemble: u64,
    workers: usize,
) -> Result<StationaryEnsemble> {
    if !(burn_in >= 0.0 && thin > 0.0) || samples_per_replica == 0 {
        return Err(Error::InvalidInput("burn-in, thinning and sample count must be positive".into()));
    }
    let dt = params.inner_dt;
    let burn_steps = (burn_in / dt).round() as u64;
    let thin_steps = ((thin / dt).round() as u64).max(1);
    let probe_step = burn_steps / 2;
    let per_replica = run_ensemble(params.n_replicas, workers, |r| {
        let replica = ensemble * ENSEMBLE_STRIDE + r;
        let x0 = initial_state(params, init, replica, StreamRole::Init)?;
        let mut sim = Simulation::new(params, field, x0, mode, replica)?;
        let mut probe = None;
        for _ in 0..burn_steps {
            if sim.step_index() == probe_step {
                probe = Some(mean_abs(sim.state()));
            }
            sim.advance()?;
        }
        let mut samples = Vec::with_capacity(samples_per_replica);
        for k in 0..samples_per_replica {
            if k > 0 {
                for _ in 0..thin_steps {
                    sim.advance()?;
                }
            }
            samples.push(sim.state().clone());
        }
        let half = samples.len() / 2;
        let drift = if half == 0 {
            mean_abs(&samples[0]) - probe.unwrap_or_else(|| mean_abs(&samples[0]))
        } else {
            let avg = |s: &[SystemState]| s.iter().map(mean_abs).sum::<f64>() / s.len() as f64;
            avg(&samples[half..]) - avg(&samples[..half])
        };
        Ok((samples, drift, sim.pair_evaluations()))
    })?;
    let drifts: Vec<f64> = per_replica.iter().map(|r| r.1).collect();
    let pair_evaluations = per_replica.iter().map(|r| r.2).sum();
    Ok(StationaryEnsemble {
        samples: per_replica.into_iter().flat_map(|r| r.0).collect(),
        samples_per_replica,
        drift: mean_stderr(&drifts),
        pair_evaluations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauDistance {
    pub tau: f64,
    /// Mean over reference ensembles of the pooled-marginal distance.
    pub marginal: f64,
    /// `√max(D² - floor², 0)`.
    pub marginal_corrected: f64,
    pub system: Option<f64>,
    pub system_corrected: Option<f64>,
    pub nonstationary: bool,
    pub pair_evaluations: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleComparison {
    pub oracle: OracleReport,
    pub mean_abs: f64,
    pub mean_abs_stderr: f64,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    /// `|estimate - oracle| / stderr` for `E|x¹|` and `E|x¹|²`.
    pub z_scores: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantBiasReport {
    pub burn_in: f64,
    pub thin: f64,
    pub samples_per_ensemble: usize,
    pub symmetrized: bool,
    pub floor_marginal: f64,
    pub floor_marginal_pairs: Vec<f64>,
    pub floor_system: Option<f64>,
    pub distances: Vec<TauDistance>,
    /// Order fit of the corrected pooled-marginal distance against τ.
    pub fit_marginal: Option<FitSummary>,
    pub fit_system: Option<FitSummary>,
    /// Corrected marginal distance at the largest τ over that at the smallest τ.
    pub marginal_ratio: Option<f64>,
    pub reference_nonstationary: Vec<bool>,
    pub oracle: Option<OracleComparison>,
    pub warnings: Vec<String>,
}

/// Sorted pooled coordinates, optionally with their mirror images.
fn pooled(samples: &[SystemState], idx: Option<&[usize]>, per_replica: usize, symmetrize: bool) -> Vec<f64> {
    let mut atoms = Vec::new();
    let mut push = |s: &SystemState| {
        atoms.extend_from_slice(s.positions());
        if symmetrize {
            atoms.extend(s.positions().iter().map(|x| -x));
        }
    };
    match idx {
        None => samples.iter().for_each(&mut push),
        Some(idx) => {
            for &r in idx {
                samples[r * per_replica..(r + 1) * per_replica].iter().for_each(&mut push);
            }
        }
    }
    atoms.sort_by(f64::total_cmp);
    atoms
}

/// 1-D `W₁` between two sorted pools of equal size.
fn sorted_w1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn measure(samples: &[SystemState], symmetrize: bool) -> Result<EmpiricalMeasure> {
    let mut all = samples.to_vec();
    if symmetrize {
        for s in samples {
            all.push(SystemState::new(s.n_particles(), s.dim(), s.positions().iter().map(|x| -x).collect(), s.time)?);
        }
    }
    EmpiricalMeasure::new(all)
}

fn correct(d: f64, floor: f64) -> f64 {
    (d * d - floor * floor).max(0.0).sqrt()
}

/// Floor and per-τ distances from reference and RB–IPS ensembles.
fn distances_with(refs: &[Vec<f64>], rbs: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
    let mut pairs = Vec::new();
    for i in 0..refs.len() {
        for j in i + 1..refs.len() {
            pairs.push(sorted_w1(&refs[i], &refs[j]));
        }
    }
    let floor = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let ds = rbs.iter().map(|rb| refs.iter().map(|r| sorted_w1(r, rb)).sum::<f64>() / refs.len() as f64).collect();
    (floor, pairs, ds)
}

/// Stationary IPS and RB–IPS ensembles for every τ, compared through the
/// noise-floor corrected pooled-marginal distance (and the exact system-level
/// distance when small enough).
pub fn run_invariant_bias(cfg: &ExperimentConfig) -> Result<InvariantBiasReport> {
    cfg.validate_for(ExperimentKind::InvariantBias)?;
    let ib = &cfg.invariant_bias;
    let field = cfg.field()?;
    let n = cfg.sim.n_particles;
    let rate = if ib.burn_in.is_none() || ib.thin.is_none() {
        Some(geometry(&field, &cfg.distance, 0.01)?.constants.c)
    } else {
        None
    };
    let burn_in = ib.burn_in.unwrap_or_else(|| 10.0 / rate.unwrap_or(1.0));
    let thin = ib.thin.unwrap_or_else(|| 1.0 / rate.unwrap_or(1.0));
    let s = ib.samples_per_replica;
    let k_refs = ib.reference_ensembles;
    let mut warnings = Vec::new();

    let ips_params = cfg.params(n, cfg.sim.batch_size, cfg.sim.batch_period);
    let refs = (0..k_refs as u64)
        .map(|e| stationary_ensemble(&ips_params, &field, Mode::Ips, &ib.init, burn_in, thin, s, e, cfg.workers))
        .collect::<Result<Vec<_>>>()?;
    let rbs = ib
        .tau_values
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let params = cfg.params(n, cfg.sim.batch_size, tau);
            stationary_ensemble(&params, &field, Mode::Rbips, &ib.init, burn_in, thin, s, (k_refs + k) as u64, cfg.workers)
        })
        .collect::<Result<Vec<_>>>()?;
    for (k, e) in refs.iter().enumerate() {
        if e.nonstationary() {
            warnings.push(format!("IPS reference ensemble {k} failed the stationarity check"));
        }
    }
    for (tau, e) in ib.tau_values.iter().zip(&rbs) {
        if e.nonstationary() {
            warnings.push(format!("RB–IPS ensemble at τ = {tau} failed the stationarity check"));
        }
    }

    let mut floor_marginal = f64::NAN;
    let mut floor_marginal_pairs = Vec::new();
    let mut marginal = vec![f64::NAN; rbs.len()];
    let mut fit_marginal = None;
    let mut marginal_ratio = None;
    if cfg.sim.dim == 1 {
        // Main estimate through the library distance; the bootstrap below
        // uses the equivalent sorted-pool form.
        let ref_measures = refs.iter().map(|e| measure(&e.samples, ib.symmetrize)).collect::<Result<Vec<_>>>()?;
        let rb_measures = rbs.iter().map(|e| measure(&e.samples, ib.symmetrize)).collect::<Result<Vec<_>>>()?;
        for i in 0..k_refs {
            for j in i + 1..k_refs {
                floor_marginal_pairs.push(w1_marginal(&ref_measures[i], &ref_measures[j])?);
            }
        }
        floor_marginal = floor_marginal_pairs.iter().sum::<f64>() / floor_marginal_pairs.len() as f64;
        for (slot, rb) in marginal.iter_mut().zip(&rb_measures) {
            let mut total = 0.0;
            for r in &ref_measures {
                total += w1_marginal(r, rb)?;
            }
            *slot = total / k_refs as f64;
        }
        let corrected: Vec<f64> = marginal.iter().map(|&d| correct(d, floor_marginal)).collect();
        if ib.tau_values.len() >= 2 {
            match loglog_fit(&ib.tau_values, &corrected) {
                Some(fit) => {
                    let m = cfg.sim.n_replicas;
                    fit_marginal = Some(fit_summary(fit, m, ib.bootstrap_resamples, cfg.sim.seed, |idx| {
                        let rp: Vec<Vec<f64>> = refs.iter().map(|e| pooled(&e.samples, Some(idx), s, ib.symmetrize)).collect();
                        let bp: Vec<Vec<f64>> = rbs.iter().map(|e| pooled(&e.samples, Some(idx), s, ib.symmetrize)).collect();
                        let (floor, _, ds) = distances_with(&rp, &bp);
                        let ys: Vec<f64> = ds.iter().map(|&d| correct(d, floor)).collect();
                        loglog_fit(&ib.tau_values, &ys).map(|f| f.slope)
                    }));
                }
                None => warnings.push("corrected marginal distance is at the noise floor for some τ; no order fit".into()),
            }
        }
        let (imax, imin) = extreme_taus(&ib.tau_values);
        if corrected[imin] > 0.0 {
            marginal_ratio = Some(corrected[imax] / corrected[imin]);
        }
    } else {
        warnings.push("pooled-marginal distance skipped: d ≠ 1".into());
    }

    let total = cfg.sim.n_replicas * s;
    let mut floor_system = None;
    let mut system = vec![None; rbs.len()];
    let mut fit_system = None;
    if ib.system_level && n <= 8 && total <= MAX_EXACT_SAMPLES {
        let ref_measures = refs.iter().map(|e| measure(&e.samples, false)).collect::<Result<Vec<_>>>()?;
        let mut pairs = Vec::new();
        for i in 0..k_refs {
            for j in i + 1..k_refs {
                pairs.push(w1_exact(&ref_measures[i], &ref_measures[j])?);
            }
        }
        let floor = pairs.iter().sum::<f64>() / pairs.len() as f64;
        for (slot, e) in system.iter_mut().zip(&rbs) {
            let rb = measure(&e.samples, false)?;
            let mut acc = 0.0;
            for r in &ref_measures {
                acc += w1_exact(r, &rb)?;
            }
            *slot = Some(acc / k_refs as f64);
        }
        let corrected: Vec<f64> = system.iter().map(|d| correct(d.unwrap_or(f64::NAN), floor)).collect();
        if ib.tau_values.len() >= 2 {
            fit_system = loglog_fit(&ib.tau_values, &corrected).map(|fit| fit_summary(fit, cfg.sim.n_replicas, 0, cfg.sim.seed, |_| None));
        }
        floor_system = Some(floor);
    }

    let distances = ib
        .tau_values
        .iter()
        .enumerate()
        .map(|(k, &tau)| TauDistance {
            tau,
            marginal: marginal[k],
            marginal_corrected: correct(marginal[k], floor_marginal),
            system: system[k],
            system_corrected: system[k].zip(floor_system).map(|(d, f)| correct(d, f)),
            nonstationary: rbs[k].nonstationary(),
            pair_evaluations: rbs[k].pair_evaluations,
        })
        .collect();

    let oracle = if n == 2 && cfg.sim.dim == 1 && field.is_gradient() {
        Some(compare_with_oracle(&field, &refs, cfg)?)
    } else {
        None
    };
    Ok(InvariantBiasReport {
        burn_in,
        thin,
        samples_per_ensemble: total,
        symmetrized: ib.symmetrize,
        floor_marginal,
        floor_marginal_pairs,
        floor_system,
        distances,
        fit_marginal,
        fit_system,
        marginal_ratio,
        reference_nonstationary: refs.iter().map(|e| e.nonstationary()).collect(),
        oracle,
        warnings,
    })
}

fn extreme_taus(taus: &[f64]) -> (usize, usize) {
    let imax = (0..taus.len()).fold(0, |b, k| if taus[k] > taus[b] { k } else { b });
    let imin = (0..taus.len()).fold(0, |b, k| if taus[k] < taus[b] { k } else { b });
    (imax, imin)
}

/// IPS stationary `E|x¹|` and `E|x¹|²` (averaged over both exchangeable
/// particles) against the quadrature oracle; replicas of every reference
/// ensemble count as independent draws.
fn compare_with_oracle(field: &ForceField, refs: &[StationaryEnsemble], cfg: &ExperimentConfig) -> Result<OracleComparison> {
    let oracle = invariant_oracle_n2(field, &cfg.invariant_bias.oracle)?;
    let mut abs_values = Vec::new();
    let mut sq_values = Vec::new();
    for e in refs {
        for r in 0..e.n_replicas() {
            let block = e.replica(r);
            let count = (block.len() * 2) as f64;
            abs_values.push(block.iter().flat_map(|s| s.positions().iter().map(|x| x.abs())).sum::<f64>() / count);
            sq_values.push(block.iter().flat_map(|s| s.positions().iter().map(|x| x * x)).sum::<f64>() / count);
        }
    }
    let (mean_abs, mean_abs_stderr) = mean_stderr(&abs_values);
    let (second_moment, second_moment_stderr) = mean_stderr(&sq_values);
    Ok(OracleComparison {
        z_scores: (
            (mean_abs - oracle.mean_abs).abs() / mean_abs_stderr,
            (second_moment - oracle.second_moment).abs() / second_moment_stderr,
        ),
        oracle,
        mean_abs,
        mean_abs_stderr,
        second_moment,
        second_moment_stderr,
    })
}

impl Report for InvariantBiasReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
        vec![(
            "invariant_bias.csv".into(),
            csv(
                "tau,marginal,marginal_corrected,system,system_corrected",
                self.distances.iter().map(|d| {
                    vec![
                        d.tau.to_string(),
                        d.marginal.to_string(),
                        d.marginal_corrected.to_string(),
                        opt(d.system),
                        opt(d.system_corrected),
                    ]
                }),
            ),
        )]
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_pools_match_library_distance() {
        let a: Vec<SystemState> = [[0.5, -1.0], [2.0, 0.1], [-0.3, 0.7]]
            .iter()
            .map(|r| SystemState::from_scalars(r).unwrap())
            .collect();
        let b: Vec<SystemState> = [[1.5, -0.2], [0.0, 0.4], [-2.3, 0.9]]
            .iter()
            .map(|r| SystemState::from_scalars(r).unwrap())
            .collect();
        for sym in [false, true] {
            let lib = w1_marginal(&measure(&a, sym).unwrap(), &measure(&b, sym).unwrap()).unwrap();
            let fast = sorted_w1(&pooled(&a, None, 1, sym), &pooled(&b, None, 1, sym));
            assert!((lib - fast).abs() < 1e-14);
        }
    }

    #[test]
    fn floor_subtraction() {
        assert_eq!(correct(0.5, 0.3), 0.4);
        assert_eq!(correct(0.2, 0.3), 0.0);
    }
}
