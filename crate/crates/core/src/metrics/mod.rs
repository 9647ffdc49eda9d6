//! Transport distances between ensembles, strong error, moment estimators
//! and the quadrature oracle for the explicit invariant measure at `N = 2`.

mod assignment;
mod oracle;

pub use assignment::solve_assignment;
pub use oracle::{invariant_oracle_n2, OracleOptions, OracleReport};

use serde::{Deserialize, Serialize};

use crate::distance::DistanceFunction;
use crate::dynamics::Trajectory;
use crate::forces::SystemState;
use crate::stats::mean_stderr;
use crate::{Error, Result};

/// Largest sample count accepted by the exact assignment distances.
pub const MAX_EXACT_SAMPLES: usize = 512;

/// Weighted collection of system states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    samples: Vec<SystemState>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform weights.
    pub fn new(samples: Vec<SystemState>) -> Result<Self> {
        let m = samples.len();
        Self::with_weights(samples, vec![1.0 / m as f64; m])
    }

    pub fn with_weights(samples: Vec<SystemState>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical measure needs at least one sample".into()));
        }
        if samples.len() != weights.len() {
            return Err(Error::InvalidInput("one weight per sample is required".into()));
        }
        if samples.iter().any(|s| !s.same_shape(&samples[0])) {
            return Err(Error::InvalidInput("all samples must have the same shape".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        // Summation rounding grows with the number of weights.
        let total: f64 = weights.iter().sum();
        let tol = 1e-12f64.max(weights.len() as f64 * f64::EPSILON);
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { samples, weights })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SystemState] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_particles(&self) -> usize {
        self.samples[0].n_particles()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }
}

/// `(1/N) Σᵢ |xⁱ - yⁱ|`.
pub fn rho_one(x: &SystemState, y: &SystemState) -> f64 {
    particle_mean(x, y, |r| r)
}

fn particle_mean(x: &SystemState, y: &SystemState, cost: impl Fn(f64) -> f64) -> f64 {
    let d = x.dim();
    let n = x.n_particles();
    let (a, b) = (x.positions(), y.positions());
    let mut total = 0.0;
    for i in 0..n {
        let r2: f64 = (i * d..(i + 1) * d).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
        total += cost(r2.sqrt());
    }
    total / n as f64
}

fn exact_transport(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cost: impl Fn(f64) -> f64) -> Result<f64> {
    if a.n_particles() != b.n_particles() || a.dim() != b.dim() {
        return Err(Error::InvalidInput("measures live on different state spaces".into()));
    }
    if a.len() != b.len() || !a.is_uniform() || !b.is_uniform() {
        return Err(Error::InvalidInput(
            "exact transport needs uniform weights and equal sample counts".into(),
        ));
    }
    let m = a.len();
    if m > MAX_EXACT_SAMPLES {
        return Err(Error::TooLarge(format!(
            "{m} samples exceed the exact limit of {MAX_EXACT_SAMPLES}; use w1_marginal for one-dimensional particles"
        )));
    }
    let mut matrix = vec![0.0; m * m];
    for (i, x) in a.samples.iter().enumerate() {
        for (j, y) in b.samples.iter().enumerate() {
            matrix[i * m + j] = particle_mean(x, y, &cost);
        }
    }
    let (_, total) = solve_assignment(&matrix, m);
    Ok((total / m as f64).max(0.0))
}

/// Exact `W₁` under the ground cost `(1/N) Σᵢ |xⁱ - yⁱ|`.
pub fn w1_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    exact_transport(a, b, |r| r)
}

/// Exact `W_f` under the ground cost `(1/N) Σᵢ f(|xⁱ - yⁱ|)`.
pub fn wf_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure, df: &DistanceFunction) -> Result<f64> {
    exact_transport(a, b, |r| df.f(r))
}

/// One-dimensional `W₁` between the pooled single-particle marginals.
///
/// Every coordinate of every sample enters its pool with weight `w_m / N`.
/// The result never exceeds [`w1_exact`] on the same inputs.
pub fn w1_marginal(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::InvalidInput("pooled marginal distance requires d = 1".into()));
    }
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(a.len() * a.n_particles() + b.len() * b.n_particles());
    for (measure, sign) in [(a, 1.0), (b, -1.0)] {
        let n = measure.n_particles() as f64;
        for (s, w) in measure.samples.iter().zip(&measure.weights) {
            atoms.extend(s.positions().iter().map(|&x| (x, sign * w / n)));
        }
    }
    atoms.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for pair in atoms.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// `(1/2N) Σᵢ |x̃ⁱ - xⁱ|²`, the per-replica strong-error sample.
pub fn half_mean_square_gap(x: &SystemState, y: &SystemState) -> f64 {
    let n = x.n_particles() as f64;
    x.positions().iter().zip(y.positions()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * n)
}

/// `J(t)` with Monte Carlo standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongError {
    pub times: Vec<f64>,
    pub j: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_replicas: usize,
}

impl StrongError {
    /// Builds the series from per-replica gap series (`gaps[m][k]` at `times[k]`).
    pub fn from_gaps(times: Vec<f64>, gaps: &[Vec<f64>]) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::InvalidInput("strong error needs at least one replica".into()));
        }
        if gaps.iter().any(|g| g.len() != times.len()) {
            return Err(Error::InvalidInput("replica series do not match the time grid".into()));
        }
        let mut j = Vec::with_capacity(times.len());
        let mut stderr = Vec::with_capacity(times.len());
        let mut column = vec![0.0; gaps.len()];
        for k in 0..times.len() {
            for (c, g) in column.iter_mut().zip(gaps) {
                *c = g[k];
            }
            let (m, s) = mean_stderr(&column);
            j.push(m);
            stderr.push(s);
        }
        Ok(Self {
            times,
            j,
            stderr,
            n_replicas: gaps.len(),
        })
    }

    /// `(t, J(t), stderr)` at the time of the largest mean.
    pub fn sup(&self) -> (f64, f64, f64) {
        let k = (0..self.j.len()).fold(0, |best, k| if self.j[k] > self.j[best] { k } else { best });
        (self.times[k], self.j[k], self.stderr[k])
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,J,stderr")?;
        for k in 0..self.times.len() {
            writeln!(out, "{},{},{}", self.times[k], self.j[k], self.stderr[k])?;
        }
        Ok(())
    }
}

/// `J(t) = (1/2N) Σᵢ E|X̃ᵢ(t) - Xᵢ(t)|²` from paired trajectories
/// (IPS, RB–IPS) recorded on a common grid.
pub fn strong_error(paired: &[(Trajectory, Trajectory)]) -> Result<StrongError> {
    let Some((first, _)) = paired.first() else {
        return Err(Error::InvalidInput("strong error needs at least one replica".into()));
    };
    let times = first.times.clone();
    let mut gaps = Vec::with_capacity(paired.len());
    for (ips, rb) in paired {
        if ips.times != times || rb.times != times {
            return Err(Error::InvalidInput("paired trajectories are recorded on different grids".into()));
        }
        let series = ips
            .snapshots
            .iter()
            .zip(&rb.snapshots)
            .map(|(x, y)| {
                if x.same_shape(y) {
                    Ok(half_mean_square_gap(x, y))
                } else {
                    Err(Error::InvalidInput("paired snapshots have different shapes".into()))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        gaps.push(series);
    }
    StrongError::from_gaps(times, &gaps)
}

fn particle_norms(s: &SystemState) -> impl Iterator<Item = f64> + '_ {
    let d = s.dim();
    s.positions().chunks(d).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Per-sample values `(1/N) Σᵢ |xⁱ|^α`.
pub fn moment_samples(a: &EmpiricalMeasure, alpha: f64) -> Vec<f64> {
    let n = a.n_particles() as f64;
    a.samples.iter().map(|s| particle_norms(s).map(|r| r.powf(alpha)).sum::<f64>() / n).collect()
}

/// `(1/N) Σᵢ Σ_m w_m |xⁱ_m|^α`.
pub fn moment(a: &EmpiricalMeasure, alpha: f64) -> f64 {
    moment_samples(a, alpha).iter().zip(&a.weights).map(|(v, w)| v * w).sum()
}

/// `maxᵢ Σ_m w_m |xⁱ_m|^α`.
pub fn max_particle_moment(a: &EmpiricalMeasure, alpha: f64) -> f64 {
    let mut per_particle = vec![0.0; a.n_particles()];
    for (s, w) in a.samples.iter().zip(&a.weights) {
        for (acc, r) in per_particle.iter_mut().zip(particle_norms(s)) {
            *acc += w * r.powf(alpha);
        }
    }
    per_particle.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{build_distance, DistanceOptions, KappaSpec};
    use proptest::prelude::*;

    #[test]
    fn large_uniform_measure_accepted() {
        let samples = vec![SystemState::from_scalars(&[0.0, 1.0]).unwrap(); 100_000];
        assert_eq!(EmpiricalMeasure::new(samples).unwrap().len(), 100_000);
        let bad = vec![SystemState::from_scalars(&[0.0]).unwrap(); 2];
        assert!(EmpiricalMeasure::with_weights(bad, vec![0.5, 0.6]).is_err());
    }

    fn measure(rows: &[Vec<f64>], n: usize, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(rows.iter().map(|r| SystemState::new(n, d, r.clone(), 0.0).unwrap()).collect()).unwrap()
    }

    #[test]
    fn weights_must_sum_to_one() {
        let s = SystemState::from_scalars(&[0.0]).unwrap();
        assert!(EmpiricalMeasure::with_weights(vec![s.clone(), s.clone()], vec![0.5, 0.5 + 1e-10]).is_err());
        assert!(EmpiricalMeasure::with_weights(vec![s.clone(), s], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn single_sample_distance() {
        let a = measure(&[vec![0.0, 1.0, 2.0, 0.0]], 2, 2);
        let b = measure(&[vec![3.0, 5.0, 2.0, 1.0]], 2, 2);
        assert!((w1_exact(&a, &b).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(w1_exact(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn two_samples_brute_force() {
        let a = measure(&[vec![0.0, 1.0], vec![4.0, -1.0]], 2, 1);
        let b = measure(&[vec![3.5, -0.5], vec![0.5, 0.5]], 2, 1);
        let c = |x: &SystemState, y: &SystemState| rho_one(x, y);
        let straight = 0.5 * (c(&a.samples[0], &b.samples[0]) + c(&a.samples[1], &b.samples[1]));
        let crossed = 0.5 * (c(&a.samples[0], &b.samples[1]) + c(&a.samples[1], &b.samples[0]));
        assert!((w1_exact(&a, &b).unwrap() - straight.min(crossed)).abs() < 1e-15);
        let df = build_distance(&KappaSpec::constant(2.0).unwrap(), &DistanceOptions::default()).unwrap();
        let cf = |x: &SystemState, y: &SystemState| particle_mean(x, y, |r| df.f(r));
        let straight = 0.5 * (cf(&a.samples[0], &b.samples[0]) + cf(&a.samples[1], &b.samples[1]));
        let crossed = 0.5 * (cf(&a.samples[0], &b.samples[1]) + cf(&a.samples[1], &b.samples[0]));
        assert!((wf_exact(&a, &b, &df).unwrap() - straight.min(crossed)).abs() < 1e-15);
    }

    #[test]
    fn oversized_inputs_rejected() {
        let rows: Vec<Vec<f64>> = (0..=MAX_EXACT_SAMPLES).map(|k| vec![k as f64]).collect();
        let a = measure(&rows, 1, 1);
        assert!(matches!(w1_exact(&a, &a), Err(Error::TooLarge(_))));
    }

    #[test]
    fn marginal_examples() {
        let a = measure(&[vec![0.0, 2.0]], 2, 1);
        let b = measure(&[vec![1.0, 3.0]], 2, 1);
        assert!((w1_marginal(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((w1_marginal(&measure(&[vec![0.0]], 1, 1), &measure(&[vec![1.0]], 1, 1)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w1_marginal(&a, &a).unwrap(), 0.0);
        assert!(w1_marginal(&measure(&[vec![0.0, 0.0]], 1, 2), &measure(&[vec![0.0, 0.0]], 1, 2)).is_err());
    }

    #[test]
    fn moment_examples() {
        let a = measure(&[vec![3.0, -4.0]], 2, 1);
        assert_eq!(moment(&a, 1.0), 3.5);
        assert_eq!(max_particle_moment(&a, 2.0), 16.0);
        assert_eq!(moment(&measure(&[vec![0.0; 4]], 2, 2), 1.0), 0.0);
    }

    fn random_measure(values: &[f64], m: usize, n: usize) -> EmpiricalMeasure {
        measure(&values.chunks(n).take(m).map(|c| c.to_vec()).collect::<Vec<_>>(), n, 1)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transport_properties(
            m in 1usize..7,
            xs in proptest::collection::vec(-3.0f64..3.0, 18),
            ys in proptest::collection::vec(-3.0f64..3.0, 18),
            zs in proptest::collection::vec(-3.0f64..3.0, 18),
        ) {
            let (a, b, c) = (random_measure(&xs, m, 3), random_measure(&ys, m, 3), random_measure(&zs, m, 3));
            let ab = w1_exact(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - w1_exact(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(ab <= w1_exact(&a, &c).unwrap() + w1_exact(&c, &b).unwrap() + 1e-10);
            prop_assert!(w1_marginal(&a, &b).unwrap() <= ab + 1e-12);
        }

        #[test]
        fn wf_is_equivalent_to_w1(
            m in 1usize..6,
            xs in proptest::collection::vec(-4.0f64..4.0, 10),
            ys in proptest::collection::vec(-4.0f64..4.0, 10),
        ) {
            let df = build_distance(&KappaSpec::figure_one(), &DistanceOptions::default()).unwrap();
            let (a, b) = (random_measure(&xs, m, 2), random_measure(&ys, m, 2));
            let w1 = w1_exact(&a, &b).unwrap();
            let wf = wf_exact(&a, &b, &df).unwrap();
            prop_assert!(wf <= w1 + 1e-12);
            prop_assert!(wf >= 0.25 * df.phi0 * w1 - 1e-12);
        }
    }

    #[test]
    fn permuted_samples_are_at_distance_zero() {
        let a = measure(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![-1.0, 0.5]], 2, 1);
        let b = measure(&[vec![-1.0, 0.5], vec![0.0, 1.0], vec![2.0, 3.0]], 2, 1);
        assert!(w1_exact(&a, &b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn strong_error_relabel_invariant() {
        let times = vec![0.0, 1.0];
        let gaps = vec![vec![0.0, 1.0], vec![0.0, 3.0], vec![0.0, 2.0]];
        let a = StrongError::from_gaps(times.clone(), &gaps).unwrap();
        let b = StrongError::from_gaps(times, &[gaps[2].clone(), gaps[0].clone(), gaps[1].clone()]).unwrap();
        assert_eq!(a.j, b.j);
        assert_eq!(a.sup().1, 2.0);
    }
}
