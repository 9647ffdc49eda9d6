use serde::{Deserialize, Serialize};

use crate::distance::DistanceOptions;
use crate::dynamics::{Init, Mode};
use crate::forces::{Drift, ForceField, Interaction, SimParams};
use crate::metrics::OracleOptions;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftConfig {
    Zero,
    /// `b(x) = -γ x`.
    Linear { gamma: f64 },
    /// `b(x) = x (1 - |x|²)`.
    DoubleWell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionConfig {
    Zero,
    /// `K(x) = a x`.
    Linear { a: f64 },
    /// `K(x) = -a x exp(-|x|²/2)`.
    Gaussian { a: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub drift: DriftConfig,
    pub interaction: InteractionConfig,
    pub sigma: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            drift: DriftConfig::DoubleWell,
            interaction: InteractionConfig::Gaussian { a: 0.008 },
            sigma: std::f64::consts::SQRT_2,
        }
    }
}

impl FieldConfig {
    pub fn build(&self, dim: usize) -> Result<ForceField> {
        let drift = match self.drift {
            DriftConfig::Zero => Drift::Zero,
            DriftConfig::Linear { gamma } => Drift::Linear { gamma },
            DriftConfig::DoubleWell => Drift::DoubleWell,
        };
        let interaction = match self.interaction {
            InteractionConfig::Zero => Interaction::Zero,
            InteractionConfig::Linear { a } => Interaction::Linear { a },
            InteractionConfig::Gaussian { a } => Interaction::Gaussian { a },
        };
        ForceField::new(dim, drift, interaction, self.sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionConfig {
    pub n_values: Vec<usize>,
    pub modes: Vec<Mode>,
    /// δ as a fraction of `R₁`.
    pub delta_factor: f64,
    /// Extra δ factors for which only `m(δ)` is reported.
    pub delta_sweep: Vec<f64>,
    pub init_x: Init,
    pub init_y: Init,
    pub record_stride: u64,
    pub fit_fraction: f64,
    /// Envelope tolerance in standard errors.
    pub envelope_sigmas: f64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            n_values: vec![8, 32],
            modes: vec![Mode::Ips, Mode::Rbips],
            delta_factor: 1e-2,
            delta_sweep: vec![1e-1, 1e-2, 1e-3],
            init_x: Init::Gaussian { mean: 0.0, std: 1.0 },
            init_y: Init::Gaussian { mean: 3.0, std: 1.0 },
            record_stride: 10,
            fit_fraction: 0.1,
            envelope_sigmas: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrongErrorConfig {
    pub tau_values: Vec<f64>,
    /// Batch sizes swept at `p_sweep_tau`; empty to skip.
    pub p_values: Vec<usize>,
    pub p_sweep_tau: f64,
    pub init: Init,
    pub record_stride: u64,
    pub bootstrap_resamples: usize,
}

impl Default for StrongErrorConfig {
    fn default() -> Self {
        Self {
            tau_values: vec![0.2, 0.1, 0.05, 0.025],
            p_values: vec![2, 4, 8],
            p_sweep_tau: 0.1,
            init: Init::Gaussian { mean: 0.0, std: 1.0 },
            record_stride: 20,
            bootstrap_resamples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvariantBiasConfig {
    pub tau_values: Vec<f64>,
    /// Time discarded before sampling; defaults to `10/c`.
    pub burn_in: Option<f64>,
    /// Spacing of successive samples from one replica; defaults to `1/c`.
    pub thin: Option<f64>,
    pub samples_per_replica: usize,
    /// Independent IPS ensembles used as references and for the noise floor.
    pub reference_ensembles: usize,
    /// Pool each sample together with its mirror image `x ↦ -x`. Valid when
    /// the drift and the kernel are odd, as for every built-in field.
    pub symmetrize: bool,
    /// Also compute the exact system-level distance when `N ≤ 8` and `M ≤ 512`.
    pub system_level: bool,
    pub init: Init,
    pub bootstrap_resamples: usize,
    pub oracle: OracleOptions,
}

impl Default for InvariantBiasConfig {
    fn default() -> Self {
        Self {
            tau_values: vec![0.2, 0.1, 0.05, 0.025],
            burn_in: None,
            thin: None,
            samples_per_replica: 1,
            reference_ensembles: 4,
            symmetrize: true,
            system_level: true,
            init: Init::Gaussian { mean: 0.0, std: 1.0 },
            bootstrap_resamples: 200,
            oracle: OracleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnbiasednessConfig {
    /// `(N, p)` pairs.
    pub cases: Vec<(usize, usize)>,
    pub n_states: usize,
    pub init: Init,
}

impl Default for UnbiasednessConfig {
    fn default() -> Self {
        Self {
            cases: vec![(4, 2), (6, 2), (6, 3), (8, 4)],
            n_states: 100,
            init: Init::Gaussian { mean: 0.0, std: 2.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentsConfig {
    pub n_values: Vec<usize>,
    /// Batch periods for the RB–IPS runs.
    pub tau_values: Vec<f64>,
    /// Exponents of the per-particle maximum moments.
    pub alphas: Vec<f64>,
    /// Trailing fraction of the horizon used for the plateau.
    pub tail_fraction: f64,
    pub record_stride: u64,
    pub init: Init,
    pub bootstrap_resamples: usize,
    /// Slope tolerance in bootstrap standard errors.
    pub slope_sigmas: f64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            n_values: vec![8, 32],
            tau_values: vec![0.1, 0.025],
            alphas: vec![2.0, 4.0],
            tail_fraction: 0.5,
            record_stride: 40,
            init: Init::Gaussian { mean: 0.0, std: 2.0 },
            bootstrap_resamples: 200,
            slope_sigmas: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n_values: Vec<usize>,
    /// Minimum measured wall-clock per (N, mode).
    pub min_seconds: f64,
    pub min_steps: u64,
    /// Also time RB–IPS with `p = N`.
    pub full_batch: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_values: vec![64, 256, 1024, 4096],
            min_seconds: 0.3,
            min_steps: 3,
            full_batch: true,
        }
    }
}

/// Full configuration of every experiment; each runner reads its own section
/// together with `field`, `sim` and `distance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub field: FieldConfig,
    pub sim: SimParams,
    pub distance: DistanceOptions,
    pub workers: usize,
    pub contraction: ContractionConfig,
    pub strong_error: StrongErrorConfig,
    pub invariant_bias: InvariantBiasConfig,
    pub unbiasedness: UnbiasednessConfig,
    pub moments: MomentsConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            field: FieldConfig::default(),
            sim: SimParams::default(),
            distance: DistanceOptions::default(),
            workers: 1,
            contraction: ContractionConfig::default(),
            strong_error: StrongErrorConfig::default(),
            invariant_bias: InvariantBiasConfig::default(),
            unbiasedness: UnbiasednessConfig::default(),
            moments: MomentsConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn check_taus(name: &str, taus: &[f64], dt: f64) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must not be empty")));
    }
    for &tau in taus {
        let ratio = tau / dt;
        if !(tau > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "{name}: batch period {tau} is not a positive integer multiple of inner_dt = {dt}"
            )));
        }
    }
    Ok(())
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::InvalidInput(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn field(&self) -> Result<ForceField> {
        self.field.build(self.sim.dim)
    }

    /// Base parameters with the particle count, batch size and period replaced.
    pub(crate) fn params(&self, n: usize, p: usize, tau: f64) -> SimParams {
        SimParams {
            n_particles: n,
            batch_size: p,
            batch_period: tau,
            ..self.sim.clone()
        }
    }

    /// Checks the sections needed by `kind`.
    pub fn validate_for(&self, kind: super::ExperimentKind) -> Result<()> {
        use super::ExperimentKind as K;
        self.sim.validate()?;
        let dt = self.sim.inner_dt;
        match kind {
            K::Contraction => {
                non_empty("contraction.n_values", &self.contraction.n_values)?;
                non_empty("contraction.modes", &self.contraction.modes)?;
                if !(self.contraction.delta_factor > 0.0) {
                    return Err(Error::InvalidInput("contraction.delta_factor must be positive".into()));
                }
                for &n in &self.contraction.n_values {
                    self.params(n, self.sim.batch_size, self.sim.batch_period).validate()?;
                }
            }
            K::StrongError => {
                check_taus("strong_error.tau_values", &self.strong_error.tau_values, dt)?;
                if !self.strong_error.p_values.is_empty() {
                    check_taus("strong_error.p_sweep_tau", &[self.strong_error.p_sweep_tau], dt)?;
                }
            }
            K::InvariantBias => {
                check_taus("invariant_bias.tau_values", &self.invariant_bias.tau_values, dt)?;
                if self.invariant_bias.reference_ensembles < 2 {
                    return Err(Error::InvalidInput("invariant_bias.reference_ensembles must be at least 2".into()));
                }
                if self.invariant_bias.samples_per_replica == 0 {
                    return Err(Error::InvalidInput("invariant_bias.samples_per_replica must be positive".into()));
                }
            }
            K::Unbiasedness => non_empty("unbiasedness.cases", &self.unbiasedness.cases)?,
            K::Moments => {
                non_empty("moments.n_values", &self.moments.n_values)?;
                check_taus("moments.tau_values", &self.moments.tau_values, dt)?;
                if !(self.moments.tail_fraction > 0.0 && self.moments.tail_fraction < 1.0) {
                    return Err(Error::InvalidInput("moments.tail_fraction must lie in (0, 1)".into()));
                }
            }
            K::Bench => non_empty("bench.n_values", &self.bench.n_values)?,
            K::BuildDistance | K::Validate => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"sim": {"n_particles": 16}, "field": {"interaction": {"kind": "zero"}}}"#).unwrap();
        assert_eq!(cfg.sim.n_particles, 16);
        assert_eq!(cfg.sim.inner_dt, SimParams::default().inner_dt);
        assert_eq!(cfg.field.interaction, InteractionConfig::Zero);
        assert_eq!(cfg.field.drift, DriftConfig::DoubleWell);
    }

    #[test]
    fn tau_must_be_multiple_of_dt() {
        assert!(check_taus("t", &[0.1, 0.025], 0.005).is_ok());
        assert!(check_taus("t", &[0.0125], 0.005).is_err());
        assert!(check_taus("t", &[], 0.005).is_err());
    }
}
