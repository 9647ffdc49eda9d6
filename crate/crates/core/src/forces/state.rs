use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positions of `N` particles in `ℝ^d` at time `t`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    n: usize,
    dim: usize,
    positions: Vec<f64>,
    pub time: f64,
}

impl SystemState {
    pub fn new(n: usize, dim: usize, positions: Vec<f64>, time: f64) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "state needs at least one particle and one dimension (got N = {n}, d = {dim})"
            )));
        }
        if positions.len() != n * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates for N = {n}, d = {dim}, got {}",
                n * dim,
                positions.len()
            )));
        }
        if let Some(k) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coordinate of particle {} is not finite",
                k / dim
            )));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid time stamp {time}")));
        }
        Ok(Self {
            n,
            dim,
            positions,
            time,
        })
    }

    /// One-dimensional state from a list of scalar positions.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.len(), 1, xs.to_vec(), 0.0)
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            positions: vec![0.0; n * dim],
            time: 0.0,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the first particle with a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.positions
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| k / self.dim)
    }

    /// State whose particle `k` is particle `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidInput("permutation length differs from N".into()));
        }
        let mut positions = Vec::with_capacity(self.positions.len());
        for &src in perm {
            if src >= self.n {
                return Err(Error::InvalidInput(format!("permutation index {src} out of range")));
            }
            positions.extend_from_slice(self.particle(src));
        }
        Ok(Self {
            n: self.n,
            dim: self.dim,
            positions,
            time: self.time,
        })
    }

    pub fn same_shape(&self, other: &SystemState) -> bool {
        self.n == other.n && self.dim == other.dim
    }
}

/// Simulation parameters shared by every dynamics in the crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub n_particles: usize,
    pub dim: usize,
    /// Batch size `p`; must divide `n_particles`.
    pub batch_size: usize,
    /// Batch period `τ`: a fresh random partition is drawn every `τ`.
    pub batch_period: f64,
    /// Euler–Maruyama step `δt`; `τ` must be an integer multiple of it.
    pub inner_dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub n_replicas: usize,
}

fn integer_ratio(num: f64, den: f64) -> Option<u64> {
    let ratio = num / den;
    let k = ratio.round();
    if k >= 0.0 && (ratio - k).abs() <= 1e-9 * k.max(1.0) {
        Some(k as u64)
    } else {
        None
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidInput("need at least two particles".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if self.batch_size < 2 || !self.n_particles.is_multiple_of(self.batch_size) {
            return Err(Error::InvalidInput(format!(
                "batch size p = {} must be at least 2 and divide N = {}",
                self.batch_size, self.n_particles
            )));
        }
        if !(self.inner_dt > 0.0 && self.inner_dt.is_finite()) {
            return Err(Error::InvalidInput(format!("inner_dt = {} must be positive", self.inner_dt)));
        }
        if !(self.batch_period > 0.0 && self.batch_period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "batch_period = {} must be positive",
                self.batch_period
            )));
        }
        match integer_ratio(self.batch_period, self.inner_dt) {
            Some(k) if k >= 1 => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "batch_period = {} is not an integer multiple of inner_dt = {}",
                    self.batch_period, self.inner_dt
                )))
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon = {} must be nonnegative", self.horizon)));
        }
        if integer_ratio(self.horizon, self.inner_dt).is_none() {
            return Err(Error::InvalidInput(format!(
                "horizon = {} is not an integer multiple of inner_dt = {}",
                self.horizon, self.inner_dt
            )));
        }
        Ok(())
    }

    /// Number of inner steps per batch period.
    pub fn steps_per_batch(&self) -> u64 {
        integer_ratio(self.batch_period, self.inner_dt).unwrap_or(1).max(1)
    }

    pub fn n_steps(&self) -> u64 {
        integer_ratio(self.horizon, self.inner_dt).unwrap_or(0)
    }

    pub fn n_batches(&self) -> usize {
        self.n_particles / self.batch_size
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_particles: 8,
            dim: 1,
            batch_size: 2,
            batch_period: 0.1,
            inner_dt: 0.005,
            horizon: 5.0,
            seed: 1,
            n_replicas: 500,
        }
    }
}
