//! Mixed reflection/synchronous coupling of two copies of the dynamics and
//! the contraction of `E[ρ(X_t, Y_t)]`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distance::{m_delta, rho_slices, DistanceFunction, KappaSpec};
use crate::dynamics::{run_ensemble, Init, Partition};
use crate::forces::{batch_force_into, full_force_into, ForceField, SimParams, SystemState};
use crate::rng::{stream, StreamRng, StreamRole};
use crate::stats::{mean_stderr, ols};
use crate::{Error, Result};

/// Below this separation the reflection direction falls back to the first axis.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// `s(u) = u³(10 - 15u + 6u²)`, the C² smoothstep on `[0, 1]`.
#[inline]
pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// `(λ, π)` with `λ = 0` for `|z| ≤ δ/2`, `λ = 1` for `|z| ≥ δ`, and `π = √(1 - λ²)`.
#[inline]
pub fn lambda_pi(z: &[f64], delta: f64) -> (f64, f64) {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    lambda_pi_norm(norm, delta)
}

#[inline]
fn lambda_pi_norm(norm: f64, delta: f64) -> (f64, f64) {
    let lambda = smoothstep((norm - 0.5 * delta) / (0.5 * delta));
    (lambda, (1.0 - lambda * lambda).max(0.0).sqrt())
}

/// `(I - 2 e eᵀ) v`; `e` must be a unit vector.
pub fn reflect(v: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    if v.len() != e.len() {
        return Err(Error::InvalidInput("vector and normal have different lengths".into()));
    }
    let norm2: f64 = e.iter().map(|x| x * x).sum();
    if (norm2.sqrt() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("reflection normal has length {}", norm2.sqrt())));
    }
    let mut out = v.to_vec();
    reflect_into(&mut out, e);
    Ok(out)
}

#[inline]
fn reflect_into(v: &mut [f64], e: &[f64]) {
    let dot: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
    for (vi, ei) in v.iter_mut().zip(e) {
        *vi -= 2.0 * dot * ei;
    }
}

/// Two copies of the system evolved jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub x_state: SystemState,
    pub y_state: SystemState,
    pub delta: f64,
}

impl CoupledState {
    pub fn new(x_state: SystemState, y_state: SystemState, delta: f64) -> Result<Self> {
        if !x_state.same_shape(&y_state) {
            return Err(Error::InvalidInput("coupled halves must have the same shape".into()));
        }
        if x_state.time != y_state.time {
            return Err(Error::InvalidInput("coupled halves must share a time stamp".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
        }
        Ok(Self { x_state, y_state, delta })
    }
}

/// Perturbation `γⁱ(x)` of the product model: reads all `N × d` positions
/// and writes `N × d` values.
pub type Perturbation = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Which force drives both halves.
#[derive(Clone)]
pub enum CouplingMode {
    /// `bⁱ(x) = b(xⁱ) + γⁱ(x)`; the field's interaction is ignored.
    Product { perturbation: Option<Perturbation> },
    Ips,
    /// Both halves use the partition passed to the step.
    Rbips,
}

impl std::fmt::Debug for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CouplingMode::Product { perturbation } => {
                write!(f, "Product {{ perturbed: {} }}", perturbation.is_some())
            }
            CouplingMode::Ips => write!(f, "Ips"),
            CouplingMode::Rbips => write!(f, "Rbips"),
        }
    }
}

fn mode_force(
    x: &[f64],
    n: usize,
    field: &ForceField,
    mode: &CouplingMode,
    partition: Option<&Partition>,
    out: &mut [f64],
    pairs: &mut u64,
) -> Result<()> {
    match mode {
        CouplingMode::Ips => full_force_into(x, n, field, out, pairs),
        CouplingMode::Rbips => {
            let part = partition.ok_or_else(|| Error::InvalidInput("rbips coupling needs a partition".into()))?;
            batch_force_into(x, n, field, part, out, pairs)
        }
        CouplingMode::Product { perturbation } => {
            let d = field.dim;
            for i in 0..n {
                field.drift.eval(&x[i * d..(i + 1) * d], &mut out[i * d..(i + 1) * d]);
            }
            if let Some(gamma) = perturbation {
                let mut extra = vec![0.0; out.len()];
                gamma(x, &mut extra);
                for (o, e) in out.iter_mut().zip(&extra) {
                    *o += e;
                }
            }
            match out.iter().position(|v| !v.is_finite()) {
                Some(k) => Err(Error::NonFiniteForce {
                    particle: k / d,
                    partner: None,
                }),
                None => Ok(()),
            }
        }
    }
}

struct Workspace {
    fx: Vec<f64>,
    fy: Vec<f64>,
    xi: Vec<f64>,
    xi_sync: Vec<f64>,
    e: Vec<f64>,
}

impl Workspace {
    fn new(len: usize, d: usize) -> Self {
        Self {
            fx: vec![0.0; len],
            fy: vec![0.0; len],
            xi: vec![0.0; d],
            xi_sync: vec![0.0; d],
            e: vec![0.0; d],
        }
    }
}

/// One Euler–Maruyama step of the coupled pair. Per particle the draws are
/// `ξ` then `ξ̃`; the X half receives `σλ√δt ξ + σπ√δt ξ̃` and the Y half
/// `σλ√δt (I - 2eeᵀ)ξ + σπ√δt ξ̃` with `e = (xⁱ - yⁱ)/|xⁱ - yⁱ|`.
pub fn step_coupled<R: Rng + ?Sized>(
    cs: &CoupledState,
    field: &ForceField,
    mode: &CouplingMode,
    partition: Option<&Partition>,
    dt: f64,
    rng: &mut R,
) -> Result<CoupledState> {
    step_coupled_with_axis(cs, field, mode, partition, dt, rng, 0)
}

/// [`step_coupled`] with a configurable fallback axis for `|Z| < 1e-12`.
pub fn step_coupled_with_axis<R: Rng + ?Sized>(
    cs: &CoupledState,
    field: &ForceField,
    mode: &CouplingMode,
    partition: Option<&Partition>,
    dt: f64,
    rng: &mut R,
    fallback_axis: usize,
) -> Result<CoupledState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let d = cs.x_state.dim();
    if field.dim != d || fallback_axis >= d {
        return Err(Error::InvalidInput("field dimension or fallback axis does not match the state".into()));
    }
    if let (CouplingMode::Rbips, Some(part)) = (mode, partition) {
        part.validate(cs.x_state.n_particles())?;
    }
    let mut next = cs.clone();
    let mut ws = Workspace::new(cs.x_state.positions().len(), d);
    let mut pairs = 0;
    coupled_update(&mut next, field, mode, partition, dt, rng, fallback_axis, &mut ws, &mut pairs)?;
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
fn coupled_update<R: Rng + ?Sized>(
    cs: &mut CoupledState,
    field: &ForceField,
    mode: &CouplingMode,
    partition: Option<&Partition>,
    dt: f64,
    rng: &mut R,
    fallback_axis: usize,
    ws: &mut Workspace,
    pairs: &mut u64,
) -> Result<()> {
    let n = cs.x_state.n_particles();
    let d = cs.x_state.dim();
    let time = cs.x_state.time;
    let as_divergence = |e: Error| match e {
        Error::NonFiniteForce { particle, .. } => Error::Divergence { time, particle },
        other => other,
    };
    mode_force(cs.x_state.positions(), n, field, mode, partition, &mut ws.fx, pairs).map_err(as_divergence)?;
    mode_force(cs.y_state.positions(), n, field, mode, partition, &mut ws.fy, pairs).map_err(as_divergence)?;
    let amp = field.sigma * dt.sqrt();
    let x = cs.x_state.positions_mut();
    let y = cs.y_state.positions_mut();
    for i in 0..n {
        for v in ws.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for v in ws.xi_sync.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let row = i * d..(i + 1) * d;
        let mut norm2 = 0.0;
        for c in 0..d {
            let z = x[row.start + c] - y[row.start + c];
            ws.e[c] = z;
            norm2 += z * z;
        }
        let norm = norm2.sqrt();
        let (lambda, pi) = lambda_pi_norm(norm, cs.delta);
        for c in 0..d {
            let k = row.start + c;
            x[k] += ws.fx[k] * dt + amp * pi * ws.xi_sync[c];
            y[k] += ws.fy[k] * dt + amp * pi * ws.xi_sync[c];
        }
        if lambda > 0.0 {
            if norm < DEGENERACY_THRESHOLD {
                ws.e.iter_mut().for_each(|v| *v = 0.0);
                ws.e[fallback_axis] = 1.0;
            } else {
                ws.e.iter_mut().for_each(|v| *v /= norm);
            }
            for c in 0..d {
                x[row.start + c] += amp * lambda * ws.xi[c];
            }
            reflect_into(&mut ws.xi, &ws.e);
            for c in 0..d {
                y[row.start + c] += amp * lambda * ws.xi[c];
            }
        }
    }
    cs.x_state.time = time + dt;
    cs.y_state.time = time + dt;
    for half in [&cs.x_state, &cs.y_state] {
        if let Some(p) = half.first_non_finite() {
            return Err(Error::Divergence { time: time + dt, particle: p });
        }
    }
    Ok(())
}

/// Left-hand side and right-hand side of the generator bound
/// `Σᵢ [(rⁱ)⁻¹ Zⁱ·(bⁱ(X) - bⁱ(Y)) f'(rⁱ) + 2σ²λ²(Zⁱ) f''(rⁱ)] ≤ N m(δ) - c Σᵢ f(rⁱ)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GeneratorBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl GeneratorBound {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Evaluates both sides of the generator bound at one coupled configuration.
/// At `rⁱ = 0` the drift term is replaced by its supremum over directions,
/// `|bⁱ(X) - bⁱ(Y)| f'(0)`.
pub fn generator_bound(
    cs: &CoupledState,
    field: &ForceField,
    mode: &CouplingMode,
    partition: Option<&Partition>,
    df: &DistanceFunction,
    m_delta: f64,
) -> Result<GeneratorBound> {
    let n = cs.x_state.n_particles();
    let d = cs.x_state.dim();
    let mut fx = vec![0.0; n * d];
    let mut fy = vec![0.0; n * d];
    let mut pairs = 0;
    mode_force(cs.x_state.positions(), n, field, mode, partition, &mut fx, &mut pairs)?;
    mode_force(cs.y_state.positions(), n, field, mode, partition, &mut fy, &mut pairs)?;
    let x = cs.x_state.positions();
    let y = cs.y_state.positions();
    let c = df.contraction_rate(field.sigma);
    let s2 = field.sigma * field.sigma;
    let (mut lhs, mut sum_f) = (0.0, 0.0);
    for i in 0..n {
        let row = i * d..(i + 1) * d;
        let z: Vec<f64> = row.clone().map(|k| x[k] - y[k]).collect();
        let db: Vec<f64> = row.clone().map(|k| fx[k] - fy[k]).collect();
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = df.values(r);
        let drift_term = if r > 0.0 {
            z.iter().zip(&db).map(|(a, b)| a * b).sum::<f64>() / r * v.fp
        } else {
            db.iter().map(|b| b * b).sum::<f64>().sqrt() * v.fp
        };
        let (lambda, _) = lambda_pi_norm(r, cs.delta);
        lhs += drift_term + 2.0 * s2 * lambda * lambda * v.fpp;
        sum_f += v.f;
    }
    Ok(GeneratorBound {
        lhs,
        rhs: n as f64 * m_delta - c * sum_f,
    })
}

/// Stateful coupled integrator for one replica. In RB–IPS mode both halves
/// share one partition per batch period, drawn from the partition stream.
pub struct CoupledSimulation<'a> {
    field: &'a ForceField,
    params: SimParams,
    mode: CouplingMode,
    state: CoupledState,
    step: u64,
    steps_per_batch: u64,
    noise_rng: StreamRng,
    partition_rng: StreamRng,
    partition: Option<Partition>,
    ws: Workspace,
    pairs: u64,
}

impl<'a> CoupledSimulation<'a> {
    pub fn new(params: &SimParams, field: &'a ForceField, state: CoupledState, mode: CouplingMode, replica: u64) -> Result<Self> {
        params.validate()?;
        if state.x_state.n_particles() != params.n_particles || state.x_state.dim() != params.dim || field.dim != params.dim {
            return Err(Error::InvalidInput("coupled state does not match the parameters".into()));
        }
        let len = state.x_state.positions().len();
        Ok(Self {
            field,
            params: params.clone(),
            mode,
            state,
            step: 0,
            steps_per_batch: params.steps_per_batch(),
            noise_rng: stream(params.seed, replica, StreamRole::Noise),
            partition_rng: stream(params.seed, replica, StreamRole::Partition),
            partition: None,
            ws: Workspace::new(len, params.dim),
            pairs: 0,
        })
    }

    pub fn state(&self) -> &CoupledState {
        &self.state
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn advance(&mut self) -> Result<()> {
        if matches!(self.mode, CouplingMode::Rbips) && self.step.is_multiple_of(self.steps_per_batch) {
            let mut part = crate::dynamics::sample_partition(self.params.n_particles, self.params.batch_size, &mut self.partition_rng)?;
            part.epoch = self.step / self.steps_per_batch;
            self.partition = Some(part);
        }
        let dt = self.params.inner_dt;
        coupled_update(
            &mut self.state,
            self.field,
            &self.mode,
            self.partition.as_ref(),
            dt,
            &mut self.noise_rng,
            0,
            &mut self.ws,
            &mut self.pairs,
        )?;
        self.step += 1;
        let t = self.step as f64 * dt;
        self.state.x_state.time = t;
        self.state.y_state.time = t;
        Ok(())
    }
}

/// Settings of [`contraction_experiment`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionOptions {
    /// Coupling parameter δ; defaults to `R₁ / 100`.
    pub delta: Option<f64>,
    /// Record `E[ρ]` every this many inner steps.
    pub record_stride: u64,
    /// Points with `E[ρ_t] ≥ fit_fraction · E[ρ_0]` enter the rate fit.
    pub fit_fraction: f64,
    pub workers: usize,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            delta: None,
            record_stride: 10,
            fit_fraction: 0.1,
            workers: 1,
        }
    }
}

/// Ensemble decay of `E[ρ_t]` with the theoretical envelopes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySeries {
    pub mode: String,
    pub n_particles: usize,
    pub n_replicas: usize,
    pub delta: f64,
    pub c: f64,
    pub m_delta: f64,
    pub times: Vec<f64>,
    pub mean_rho: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `e^{-ct} E[ρ₀] + m(δ)(1 - e^{-ct})/c`.
    pub envelope: Vec<f64>,
    /// `e^{-ct} E[ρ₀] + m(δ)/c`.
    pub envelope_loose: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub fitted_rate_stderr: Option<f64>,
    pub fit_points: usize,
    /// `None` when the interaction bound is unknown.
    pub smallness_ok: Option<bool>,
    pub warning: Option<String>,
}

impl DecaySeries {
    /// Largest `(E[ρ_t] - envelope_t) / stderr_t` over recorded times,
    /// using the loose envelope when `loose` is set.
    pub fn worst_excess(&self, loose: bool) -> f64 {
        let env = if loose { &self.envelope_loose } else { &self.envelope };
        self.mean_rho
            .iter()
            .zip(env)
            .zip(&self.stderr)
            .map(|((m, e), s)| {
                let diff = m - e;
                if diff <= 0.0 {
                    diff / s.max(f64::MIN_POSITIVE)
                } else if *s > 0.0 {
                    diff / s
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `true` when `E[ρ_t] ≤ envelope_t + k · stderr_t` at every recorded time.
    pub fn within_envelope(&self, k: f64, loose: bool) -> bool {
        let env = if loose { &self.envelope_loose } else { &self.envelope };
        self.mean_rho.iter().zip(env).zip(&self.stderr).all(|((m, e), s)| *m <= e + k * s)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_rho,stderr,envelope")?;
        for k in 0..self.times.len() {
            writeln!(out, "{},{},{},{}", self.times[k], self.mean_rho[k], self.stderr[k], self.envelope[k])?;
        }
        Ok(())
    }
}

/// Runs `M` coupled replicas from `(init_x, init_y)` and records `E[ρ_t]`.
///
/// The X half of replica `m` starts from the init stream and the Y half from
/// the alternate init stream; identical initialisers therefore give
/// different (independent) starting points unless the initialiser is
/// deterministic.
#[allow(clippy::too_many_arguments)]
pub fn contraction_experiment(
    params: &SimParams,
    field: &ForceField,
    spec: &KappaSpec,
    df: &DistanceFunction,
    init_x: &Init,
    init_y: &Init,
    mode: &CouplingMode,
    opts: &ContractionOptions,
) -> Result<DecaySeries> {
    params.validate()?;
    let delta = opts.delta.unwrap_or(df.r1 / 100.0);
    let stride = opts.record_stride.max(1);
    let per_replica = run_ensemble(params.n_replicas, opts.workers, |replica| {
        let mut rx = stream(params.seed, replica, StreamRole::Init);
        let mut ry = stream(params.seed, replica, StreamRole::InitAlt);
        let x0 = init_x.realize(params.n_particles, params.dim, &mut rx)?;
        let y0 = init_y.realize(params.n_particles, params.dim, &mut ry)?;
        let cs = CoupledState::new(x0, y0, delta)?;
        let mut sim = CoupledSimulation::new(params, field, cs, mode.clone(), replica)?;
        let mut series = Vec::with_capacity((params.n_steps() / stride + 1) as usize);
        let rho_now = |s: &CoupledState| rho_slices(s.x_state.positions(), s.y_state.positions(), params.dim, df);
        series.push(rho_now(sim.state()));
        for _ in 0..params.n_steps() {
            sim.advance()?;
            if sim.step_index() % stride == 0 {
                series.push(rho_now(sim.state()));
            }
        }
        Ok(series)
    })?;

    let n_points = per_replica[0].len();
    let times: Vec<f64> = (0..n_points).map(|k| (k as u64 * stride) as f64 * params.inner_dt).collect();
    let mut mean_rho = Vec::with_capacity(n_points);
    let mut stderr = Vec::with_capacity(n_points);
    let mut column = vec![0.0; per_replica.len()];
    for k in 0..n_points {
        for (slot, series) in column.iter_mut().zip(&per_replica) {
            *slot = series[k];
        }
        let (m, s) = mean_stderr(&column);
        mean_rho.push(m);
        stderr.push(s);
    }
    let c = df.contraction_rate(field.sigma);
    let m = m_delta(df, spec, field.sigma, delta)?;
    let rho0 = mean_rho[0];
    let envelope = times.iter().map(|&t| (-c * t).exp() * rho0 + m * (1.0 - (-c * t).exp()) / c).collect();
    let envelope_loose = times.iter().map(|&t| (-c * t).exp() * rho0 + m / c).collect();

    let (mut ft, mut fl) = (Vec::new(), Vec::new());
    for (t, v) in times.iter().zip(&mean_rho) {
        if *v >= opts.fit_fraction * rho0 && *v > 0.0 {
            ft.push(*t);
            fl.push(v.ln());
        } else {
            break;
        }
    }
    let fit = ols(&ft, &fl);
    let smallness_ok = field.satisfies_smallness(df.c0, df.phi0);
    let interacting = !field.interaction.is_zero() && !matches!(mode, CouplingMode::Product { perturbation: None });
    let warning = match (interacting, smallness_ok) {
        (true, Some(false)) => Some(format!(
            "interaction bound {:.4e} exceeds the smallness threshold {:.4e}; the envelope is not guaranteed",
            field.lk_bound.unwrap_or(f64::NAN),
            field.smallness_threshold(df.c0, df.phi0)
        )),
        (true, None) => Some("interaction bound unknown; the envelope is not guaranteed".into()),
        _ => None,
    };
    Ok(DecaySeries {
        mode: format!("{mode:?}").split_whitespace().next().unwrap_or("").to_lowercase(),
        n_particles: params.n_particles,
        n_replicas: params.n_replicas,
        delta,
        c,
        m_delta: m,
        times,
        mean_rho,
        stderr,
        envelope,
        envelope_loose,
        fitted_rate: fit.map(|f| -f.slope),
        fitted_rate_stderr: fit.map(|f| f.slope_stderr),
        fit_points: ft.len(),
        smallness_ok,
        warning,
    })
}
