//! Euler–Maruyama integration of the full interacting system (IPS) and its
//! random batch approximation (RB–IPS), paired runs under shared noise, and
//! parallel ensembles.

mod ensemble;
mod partition;

pub use ensemble::run_ensemble;
pub use partition::{sample_partition, Partition};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::forces::{batch_force_into, full_force_into, ForceField, SimParams, SystemState};
use crate::rng::{stream, StreamId, StreamRng, StreamRole};
use crate::{Error, Result};

/// Which interaction sum drives the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ips,
    Rbips,
}

/// Initial condition library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Every particle frozen at the origin.
    Origin,
    /// I.i.d. coordinates `mean + std · ξ`.
    Gaussian { mean: f64, std: f64 },
    /// Explicit row-major `N × d` positions.
    Array { positions: Vec<f64> },
}

impl Init {
    pub fn realize<R: Rng + ?Sized>(&self, n: usize, dim: usize, rng: &mut R) -> Result<SystemState> {
        match self {
            Init::Origin => SystemState::new(n, dim, vec![0.0; n * dim], 0.0),
            Init::Gaussian { mean, std } => {
                let xs = (0..n * dim)
                    .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                SystemState::new(n, dim, xs, 0.0)
            }
            Init::Array { positions } => SystemState::new(n, dim, positions.clone(), 0.0),
        }
    }
}

/// Fills `buf` with i.i.d. standard normals, particle-major.
#[inline]
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, buf: &mut [f64]) {
    for v in buf.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

fn divergence(err: Error, time: f64) -> Error {
    match err {
        Error::NonFiniteForce { particle, .. } => Error::Divergence { time, particle },
        other => other,
    }
}

fn euler_update(x: &mut [f64], force: &[f64], noise: &[f64], dt: f64, sigma: f64) {
    let amp = sigma * dt.sqrt();
    for ((xi, f), xi_noise) in x.iter_mut().zip(force).zip(noise) {
        *xi += f * dt + amp * xi_noise;
    }
}

fn check_finite(x: &[f64], dim: usize, time: f64) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::Divergence { time, particle: k / dim }),
        None => Ok(()),
    }
}

/// One Euler–Maruyama step of the full system:
/// `x⁺ = x + F(x) δt + σ √δt ξ`.
pub fn step_ips<R: Rng + ?Sized>(state: &SystemState, field: &ForceField, dt: f64, rng: &mut R) -> Result<SystemState> {
    let mut noise = vec![0.0; state.positions().len()];
    draw_noise(rng, &mut noise);
    step_with_noise(state, field, None, dt, &noise)
}

/// One Euler–Maruyama step with the interaction restricted to batches.
pub fn step_rbips<R: Rng + ?Sized>(
    state: &SystemState,
    field: &ForceField,
    partition: &Partition,
    dt: f64,
    rng: &mut R,
) -> Result<SystemState> {
    partition.validate(state.n_particles())?;
    let mut noise = vec![0.0; state.positions().len()];
    draw_noise(rng, &mut noise);
    step_with_noise(state, field, Some(partition), dt, &noise)
}

/// Deterministic part of a step given the standard normal draws.
pub fn step_with_noise(
    state: &SystemState,
    field: &ForceField,
    partition: Option<&Partition>,
    dt: f64,
    noise: &[f64],
) -> Result<SystemState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    if state.dim() != field.dim || noise.len() != state.positions().len() {
        return Err(Error::InvalidInput("state, field and noise shapes differ".into()));
    }
    let n = state.n_particles();
    let mut force = vec![0.0; noise.len()];
    let mut pairs = 0;
    let res = match partition {
        Some(part) => batch_force_into(state.positions(), n, field, part, &mut force, &mut pairs),
        None => full_force_into(state.positions(), n, field, &mut force, &mut pairs),
    };
    res.map_err(|e| divergence(e, state.time))?;
    let mut next = state.clone();
    euler_update(next.positions_mut(), &force, noise, dt, field.sigma);
    next.time = state.time + dt;
    check_finite(next.positions(), state.dim(), next.time)?;
    Ok(next)
}

/// Stateful integrator for one replica.
///
/// Time after `k` steps is `k · δt` exactly. In RB–IPS mode a fresh
/// partition is drawn from the partition stream at every step index that is
/// a multiple of `τ/δt`; noise always comes from the separate noise stream.
pub struct Simulation<'a> {
    field: &'a ForceField,
    params: SimParams,
    mode: Mode,
    state: SystemState,
    step: u64,
    steps_per_batch: u64,
    noise_rng: StreamRng,
    partition_rng: StreamRng,
    partition: Option<Partition>,
    perm: Vec<usize>,
    force: Vec<f64>,
    noise: Vec<f64>,
    pairs: u64,
    streams: Vec<StreamId>,
}

impl<'a> Simulation<'a> {
    pub fn new(params: &SimParams, field: &'a ForceField, init: SystemState, mode: Mode, replica: u64) -> Result<Self> {
        params.validate()?;
        if init.n_particles() != params.n_particles || init.dim() != params.dim || field.dim != params.dim {
            return Err(Error::InvalidInput(format!(
                "initial state is {}×{}, parameters ask for {}×{} (field dimension {})",
                init.n_particles(),
                init.dim(),
                params.n_particles,
                params.dim,
                field.dim
            )));
        }
        let noise_id = StreamId::new(params.seed, replica, StreamRole::Noise);
        let partition_id = StreamId::new(params.seed, replica, StreamRole::Partition);
        let len = init.positions().len();
        let mut state = init;
        state.time = 0.0;
        Ok(Self {
            field,
            params: params.clone(),
            mode,
            state,
            step: 0,
            steps_per_batch: params.steps_per_batch(),
            noise_rng: noise_id.rng(),
            partition_rng: partition_id.rng(),
            partition: None,
            perm: Vec::with_capacity(params.n_particles),
            force: vec![0.0; len],
            noise: vec![0.0; len],
            pairs: 0,
            streams: match mode {
                Mode::Ips => vec![noise_id],
                Mode::Rbips => vec![noise_id, partition_id],
            },
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Interaction-pair evaluations so far.
    pub fn pair_evaluations(&self) -> u64 {
        self.pairs
    }

    /// Partition in force during the last step (RB–IPS only).
    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn streams(&self) -> &[StreamId] {
        &self.streams
    }

    /// Draws the next noise vector and advances one step.
    pub fn advance(&mut self) -> Result<()> {
        draw_noise(&mut self.noise_rng, &mut self.noise);
        self.advance_inner()
    }

    /// Advances one step driven by externally supplied standard normals.
    pub fn advance_with(&mut self, noise: &[f64]) -> Result<()> {
        if noise.len() != self.noise.len() {
            return Err(Error::InvalidInput("noise length differs from N × d".into()));
        }
        self.noise.copy_from_slice(noise);
        self.advance_inner()
    }

    pub(crate) fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub(crate) fn draw_own_noise(&mut self) {
        draw_noise(&mut self.noise_rng, &mut self.noise);
    }

    fn advance_inner(&mut self) -> Result<()> {
        let n = self.params.n_particles;
        let time = self.state.time;
        match self.mode {
            Mode::Ips => full_force_into(self.state.positions(), n, self.field, &mut self.force, &mut self.pairs),
            Mode::Rbips => {
                if self.step.is_multiple_of(self.steps_per_batch) {
                    let epoch = self.step / self.steps_per_batch;
                    let mut batches = self.partition.take().map(|p| p.into_batches()).unwrap_or_default();
                    partition::sample_into(n, self.params.batch_size, &mut self.partition_rng, &mut self.perm, &mut batches)?;
                    self.partition = Some(Partition::from_canonical(batches, epoch));
                }
                let part = self.partition.as_ref().expect("partition drawn at epoch start");
                batch_force_into(self.state.positions(), n, self.field, part, &mut self.force, &mut self.pairs)
            }
        }
        .map_err(|e| divergence(e, time))?;
        let dt = self.params.inner_dt;
        euler_update(self.state.positions_mut(), &self.force, &self.noise, dt, self.field.sigma);
        self.step += 1;
        self.state.time = self.step as f64 * dt;
        check_finite(self.state.positions(), self.params.dim, self.state.time)
    }
}

/// Recorded output of [`simulate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub params: SimParams,
    pub times: Vec<f64>,
    pub snapshots: Vec<SystemState>,
    /// Partition epoch in force for the step that produced each snapshot
    /// (`None` for the initial state and for IPS).
    pub epochs: Vec<Option<u64>>,
    pub seed_record: Vec<StreamId>,
    pub pair_evaluations: u64,
}

/// Runs `T/δt` steps, recording the state every `stride` steps (plus the
/// initial state). The observer sees each recorded state and the partition
/// in force.
pub fn simulate(
    params: &SimParams,
    field: &ForceField,
    init: &SystemState,
    mode: Mode,
    replica: u64,
    stride: u64,
    mut observer: impl FnMut(&SystemState, Option<&Partition>),
) -> Result<Trajectory> {
    let stride = stride.max(1);
    let mut sim = Simulation::new(params, field, init.clone(), mode, replica)?;
    let mut traj = Trajectory {
        mode,
        params: params.clone(),
        times: vec![0.0],
        snapshots: vec![sim.state().clone()],
        epochs: vec![None],
        seed_record: sim.streams().to_vec(),
        pair_evaluations: 0,
    };
    observer(sim.state(), None);
    for _ in 0..params.n_steps() {
        sim.advance()?;
        if sim.step_index() % stride == 0 {
            traj.times.push(sim.state().time);
            traj.snapshots.push(sim.state().clone());
            traj.epochs.push(sim.partition().map(|p| p.epoch));
            observer(sim.state(), sim.partition());
        }
    }
    traj.pair_evaluations = sim.pair_evaluations();
    Ok(traj)
}

/// Runs the IPS and the RB–IPS from the same initial state with one shared
/// noise stream (synchronous coupling). The observer is called every
/// `stride` steps and at `t = 0` with `(time, x_ips, x_rbips)`.
pub fn simulate_paired_observed(
    params: &SimParams,
    field: &ForceField,
    init: &SystemState,
    replica: u64,
    stride: u64,
    mut observer: impl FnMut(f64, &SystemState, &SystemState),
) -> Result<(u64, u64)> {
    let stride = stride.max(1);
    let mut ips = Simulation::new(params, field, init.clone(), Mode::Ips, replica)?;
    let mut rb = Simulation::new(params, field, init.clone(), Mode::Rbips, replica)?;
    observer(0.0, ips.state(), rb.state());
    for _ in 0..params.n_steps() {
        ips.draw_own_noise();
        let noise = ips.noise().to_vec();
        ips.advance_inner()?;
        rb.advance_with(&noise)?;
        if ips.step_index() % stride == 0 {
            observer(ips.state().time, ips.state(), rb.state());
        }
    }
    Ok((ips.pair_evaluations(), rb.pair_evaluations()))
}

/// [`simulate_paired_observed`] with full recording.
pub fn simulate_paired(
    params: &SimParams,
    field: &ForceField,
    init: &SystemState,
    replica: u64,
    stride: u64,
) -> Result<(Trajectory, Trajectory)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut times = Vec::new();
    let (pa, pb) = simulate_paired_observed(params, field, init, replica, stride, |t, x, y| {
        times.push(t);
        a.push(x.clone());
        b.push(y.clone());
    })?;
    let make = |mode, snapshots: Vec<SystemState>, pairs, roles: &[StreamRole]| Trajectory {
        mode,
        params: params.clone(),
        times: times.clone(),
        epochs: vec![None; snapshots.len()],
        snapshots,
        seed_record: roles.iter().map(|&r| StreamId::new(params.seed, replica, r)).collect(),
        pair_evaluations: pairs,
    };
    Ok((
        make(Mode::Ips, a, pa, &[StreamRole::Noise]),
        make(Mode::Rbips, b, pb, &[StreamRole::Noise, StreamRole::Partition]),
    ))
}

/// Initial state for `replica` drawn from the init stream.
pub fn initial_state(params: &SimParams, init: &Init, replica: u64, role: StreamRole) -> Result<SystemState> {
    let mut rng = stream(params.seed, replica, role);
    init.realize(params.n_particles, params.dim, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::{full_interaction_force, Drift, Interaction};

    fn params(n: usize, p: usize, tau: f64, dt: f64, t: f64) -> SimParams {
        SimParams {
            n_particles: n,
            dim: 1,
            batch_size: p,
            batch_period: tau,
            inner_dt: dt,
            horizon: t,
            seed: 11,
            n_replicas: 1,
        }
    }

    #[test]
    fn silent_field_stays_put() {
        let f = ForceField::new(1, Drift::Zero, Interaction::Zero, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.3, -2.0]).unwrap();
        let next = step_with_noise(&s, &f, None, 0.1, &[0.0, 0.0]).unwrap();
        assert_eq!(next.positions(), s.positions());
    }

    #[test]
    fn deterministic_euler() {
        let f = ForceField::new(1, Drift::Linear { gamma: 1.0 }, Interaction::Zero, 1.0).unwrap();
        let s = SystemState::from_scalars(&[1.0, 1.0]).unwrap();
        let next = step_with_noise(&s, &f, None, 0.1, &[0.0, 0.0]).unwrap();
        assert!((next.positions()[0] - 0.9).abs() < 1e-15);
        assert!((next.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn batch_step_matches_hand_forces() {
        let f = ForceField::new(1, Drift::Zero, Interaction::Linear { a: -1.0 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.0, 1.0, 2.0, 4.0]).unwrap();
        let part = Partition::new(vec![vec![0, 1], vec![2, 3]], 0).unwrap();
        let next = step_with_noise(&s, &f, Some(&part), 0.5, &[0.0; 4]).unwrap();
        assert_eq!(next.positions(), &[0.5, 0.5, 3.0, 3.0]);
    }

    #[test]
    fn single_batch_step_is_bitwise_ips() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.1, -0.7, 1.3, 2.2]).unwrap();
        let a = step_ips(&s, &f, 0.01, &mut stream(1, 0, StreamRole::Noise)).unwrap();
        let b = step_rbips(&s, &f, &Partition::single(4), 0.01, &mut stream(1, 0, StreamRole::Noise)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_increments_uncorrelated() {
        let mut rng = stream(5, 0, StreamRole::Noise);
        let mut buf = vec![0.0; 1];
        let draws: Vec<f64> = (0..50_000)
            .map(|_| {
                draw_noise(&mut rng, &mut buf);
                buf[0]
            })
            .collect();
        let n = draws.len() as f64;
        let lag1: f64 = draws.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        assert!(lag1.abs() < 4.0 / n.sqrt(), "{lag1}");
    }

    #[test]
    fn zero_horizon_keeps_only_init() {
        let f = ForceField::new(1, Drift::Zero, Interaction::Zero, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.0, 1.0]).unwrap();
        let traj = simulate(&params(2, 2, 0.1, 0.01, 0.0), &f, &s, Mode::Rbips, 0, 1, |_, _| {}).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.times, vec![0.0]);
    }

    #[test]
    fn full_batch_rbips_reproduces_ips() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.1, -0.7, 1.3, 2.2]).unwrap();
        let p = params(4, 4, 0.5, 0.01, 0.5);
        let a = simulate(&p, &f, &s, Mode::Ips, 3, 1, |_, _| {}).unwrap();
        let b = simulate(&p, &f, &s, Mode::Rbips, 3, 1, |_, _| {}).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
    }

    #[test]
    fn epochs_follow_the_batch_period() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.0; 6]).unwrap();
        let p = params(6, 2, 0.05, 0.01, 0.3);
        let mut seen: Vec<(u64, Partition)> = Vec::new();
        let traj = simulate(&p, &f, &s, Mode::Rbips, 0, 1, |_, part| {
            if let Some(part) = part {
                seen.push((part.epoch, part.clone()));
            }
        })
        .unwrap();
        // Step k (1-based) uses epoch (k-1)/5; the partition is constant within an epoch.
        for (k, (epoch, part)) in seen.iter().enumerate() {
            assert_eq!(*epoch, k as u64 / 5);
            let first = seen.iter().find(|(e, _)| e == epoch).unwrap();
            assert_eq!(&first.1, part);
        }
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 0.01).abs() < 1e-12);
        }
        assert_eq!(traj.pair_evaluations, 30 * 6);
    }

    #[test]
    fn pair_counters() {
        let f = ForceField::new(1, Drift::Zero, Interaction::Gaussian { a: 0.1 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.0; 8]).unwrap();
        let p = SimParams {
            batch_size: 4,
            ..params(8, 4, 0.02, 0.01, 0.1)
        };
        let ips = simulate(&p, &f, &s, Mode::Ips, 0, 10, |_, _| {}).unwrap();
        let rb = simulate(&p, &f, &s, Mode::Rbips, 0, 10, |_, _| {}).unwrap();
        assert_eq!(ips.pair_evaluations, 10 * 8 * 7);
        assert_eq!(rb.pair_evaluations, 10 * 8 * 3);
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.0; 4]).unwrap();
        let p = params(4, 2, 0.05, 0.01, 0.2);
        let a = simulate(&p, &f, &s, Mode::Rbips, 0, 1, |_, _| {}).unwrap();
        let b = simulate(&p, &f, &s, Mode::Rbips, 0, 1, |_, _| {}).unwrap();
        let c = simulate(&p, &f, &s, Mode::Rbips, 1, 1, |_, _| {}).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn paired_runs_coincide_without_interaction() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Zero, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.5, -0.5, 1.0, 0.0]).unwrap();
        let (a, b) = simulate_paired(&params(4, 2, 0.05, 0.01, 0.3), &f, &s, 0, 1).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let (a, b) = simulate_paired(&params(4, 4, 0.05, 0.01, 0.3), &f, &s, 0, 1).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        let (a, b) = simulate_paired(&params(4, 2, 0.05, 0.01, 0.3), &f, &s, 0, 1).unwrap();
        assert_ne!(a.snapshots.last(), b.snapshots.last());
    }

    #[test]
    fn divergence_reports_time() {
        let f = ForceField::new(
            1,
            Drift::Linear { gamma: -1e200 },
            Interaction::Zero,
            1.0,
        )
        .unwrap();
        let s = SystemState::from_scalars(&[1.0, 1.0]).unwrap();
        let err = simulate(&params(2, 2, 0.1, 0.1, 1.0), &f, &s, Mode::Ips, 0, 1, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn forces_used_by_engine_match_public_sum() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.5 }, 1.0).unwrap();
        let s = SystemState::from_scalars(&[0.1, -0.7, 1.3]).unwrap();
        let forces = full_interaction_force(&s, &f).unwrap();
        let next = step_with_noise(&s, &f, None, 0.01, &[0.0; 3]).unwrap();
        for ((a, b), f) in next.positions().iter().zip(s.positions()).zip(&forces) {
            assert!((a - (b + 0.01 * f)).abs() < 1e-15);
        }
    }
}
