//! Tensor-grid quadrature for the Gibbs measure of a two-particle gradient
//! system in one dimension.

use serde::{Deserialize, Serialize};

use crate::forces::ForceField;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Points per axis on the coarsest of three nested grids.
    pub points: usize,
    /// Required drop of the scaled drift potential between its minimum and `±L`.
    pub energy_gap: f64,
    /// Largest admitted density on the domain boundary, relative to the mode.
    pub boundary_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            points: 801,
            energy_gap: 37.0,
            boundary_tol: 1e-15,
        }
    }
}

/// Moments of the first coordinate under `μ(dx) ∝ exp(-(2/σ²)(U(x¹) + U(x²) + V(x¹ - x²)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub half_width: f64,
    pub finest_points: usize,
    /// `ln ∫ exp(-(2/σ²) H)`.
    pub log_normalizer: f64,
    pub mean_abs: f64,
    pub second_moment: f64,
    pub fourth_moment: f64,
    /// `E[x¹ x²]`.
    pub cross_moment: f64,
    /// Largest boundary density relative to the mode.
    pub boundary_density: f64,
    /// Largest moment change between the two finest extrapolation levels.
    pub refinement_change: f64,
}

struct Level {
    log_z: f64,
    moments: [f64; 4],
}

fn trapezoid_level(
    u: &dyn Fn(f64) -> f64,
    v: &dyn Fn(f64) -> f64,
    half_width: f64,
    points: usize,
    e_min: f64,
) -> (Level, f64, f64) {
    let h = 2.0 * half_width / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| -half_width + h * i as f64).collect();
    let us: Vec<f64> = xs.iter().map(|&x| u(x)).collect();
    // V only ever sees differences (i - j) h.
    let vs: Vec<f64> = (0..2 * points - 1).map(|k| v((k as f64 - (points - 1) as f64) * h)).collect();
    let end_weight = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let mut sums = [0.0; 5];
    let mut grid_min = f64::INFINITY;
    let mut boundary_min = f64::INFINITY;
    for i in 0..points {
        let wi = end_weight(i);
        let xi = xs[i];
        for j in 0..points {
            let e = us[i] + us[j] + vs[i + points - 1 - j];
            grid_min = grid_min.min(e);
            if i == 0 || j == 0 || i == points - 1 || j == points - 1 {
                boundary_min = boundary_min.min(e);
            }
            let w = wi * end_weight(j) * (e_min - e).exp();
            sums[0] += w;
            sums[1] += w * xi.abs();
            sums[2] += w * xi * xi;
            sums[3] += w * xi.powi(4);
            sums[4] += w * xi * xs[j];
        }
    }
    let z = sums[0] * h * h;
    let level = Level {
        log_z: z.ln() - e_min,
        moments: [sums[1] / sums[0], sums[2] / sums[0], sums[3] / sums[0], sums[4] / sums[0]],
    };
    (level, grid_min, boundary_min)
}

/// Quadrature oracle for the invariant measure of a two-particle gradient
/// system with `d = 1`.
///
/// The domain `[-L, L]²` is grown until the scaled drift potential at `±L`
/// exceeds its minimum by `energy_gap`. The moments come from Romberg
/// extrapolation over three nested trapezoid grids, which keeps the kink of
/// `|x|` at the origin from limiting the order.
pub fn invariant_oracle_n2(field: &ForceField, opts: &OracleOptions) -> Result<OracleReport> {
    if field.dim != 1 {
        return Err(Error::InvalidInput("the invariant-measure oracle needs d = 1".into()));
    }
    if !field.is_gradient() {
        return Err(Error::InvalidInput("the invariant-measure oracle needs drift and interaction potentials".into()));
    }
    if opts.points < 5 || opts.points.is_multiple_of(2) {
        return Err(Error::InvalidInput("the oracle grid needs an odd number of at least 5 points".into()));
    }
    let beta = 2.0 / (field.sigma * field.sigma);
    let u = |x: f64| beta * field.drift_potential(&[x]).unwrap_or(f64::NAN);
    let v = |z: f64| beta * field.interaction_potential(&[z]).unwrap_or(f64::NAN);

    let mut half_width = 1.0;
    loop {
        let probe: Vec<f64> = (0..=2000).map(|k| u(-half_width + half_width * k as f64 / 1000.0)).collect();
        let u_min = probe.iter().cloned().fold(f64::INFINITY, f64::min);
        if u(half_width).min(u(-half_width)) - u_min >= opts.energy_gap {
            break;
        }
        half_width *= 1.25;
        if half_width > 1e6 {
            return Err(Error::Truncation("drift potential does not grow fast enough to confine the measure".into()));
        }
    }

    let (_, coarse_min, _) = trapezoid_level(&u, &v, half_width, opts.points, 0.0);
    if !coarse_min.is_finite() {
        return Err(Error::InvalidInput("potentials are not finite on the quadrature domain".into()));
    }
    let levels: Vec<(Level, f64, f64)> = (0..3)
        .map(|k| trapezoid_level(&u, &v, half_width, (opts.points - 1) * (1 << k) + 1, coarse_min))
        .collect();
    let e_min = levels.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let boundary_density = (e_min - levels[2].2).exp();
    if boundary_density > opts.boundary_tol {
        return Err(Error::Truncation(format!(
            "density on the boundary of [-{half_width}, {half_width}]² is {boundary_density:e} of the mode"
        )));
    }

    // Error expansion in even powers of h: two Richardson sweeps.
    let extrapolate = |a: f64, b: f64, c: f64| {
        let ab = (4.0 * b - a) / 3.0;
        let bc = (4.0 * c - b) / 3.0;
        ((16.0 * bc - ab) / 15.0, bc)
    };
    let mut moments = [0.0; 4];
    let mut refinement_change: f64 = 0.0;
    for (k, slot) in moments.iter_mut().enumerate() {
        let (best, second) = extrapolate(levels[0].0.moments[k], levels[1].0.moments[k], levels[2].0.moments[k]);
        *slot = best;
        refinement_change = refinement_change.max((best - second).abs());
    }
    let (log_normalizer, _) = extrapolate(levels[0].0.log_z, levels[1].0.log_z, levels[2].0.log_z);
    Ok(OracleReport {
        half_width,
        finest_points: (opts.points - 1) * 4 + 1,
        log_normalizer,
        mean_abs: moments[0],
        second_moment: moments[1],
        fourth_moment: moments[2],
        cross_moment: moments[3],
        boundary_density,
        refinement_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::{Drift, Interaction};
    use std::f64::consts::PI;

    fn quadratic(eps: f64) -> ForceField {
        ForceField::new(1, Drift::Linear { gamma: 1.0 }, Interaction::Linear { a: -eps }, 2f64.sqrt()).unwrap()
    }

    #[test]
    fn product_gaussian() {
        let r = invariant_oracle_n2(&quadratic(0.0), &OracleOptions::default()).unwrap();
        assert!((r.second_moment - 1.0).abs() < 1e-10);
        assert!((r.mean_abs - (2.0 / PI).sqrt()).abs() < 1e-9);
        assert!((r.log_normalizer - (2.0 * PI).ln()).abs() < 1e-10);
        assert!(r.cross_moment.abs() < 1e-12);
    }

    #[test]
    fn coupled_gaussian_closed_form() {
        // Precision [[1+ε, -ε], [-ε, 1+ε]] gives Var x¹ = (1+ε)/(1+2ε), Cov = ε/(1+2ε).
        let eps = 0.1;
        let r = invariant_oracle_n2(&quadratic(eps), &OracleOptions::default()).unwrap();
        let var = (1.0 + eps) / (1.0 + 2.0 * eps);
        assert!((r.second_moment - var).abs() < 1e-8);
        assert!((r.mean_abs - (2.0 * var / PI).sqrt()).abs() < 1e-8);
        assert!((r.fourth_moment - 3.0 * var * var).abs() < 1e-8);
        assert!((r.cross_moment - eps / (1.0 + 2.0 * eps)).abs() < 1e-8);
    }

    #[test]
    fn double_well_is_refinement_stable() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.1 }, 2f64.sqrt()).unwrap();
        let r = invariant_oracle_n2(&f, &OracleOptions::default()).unwrap();
        assert!(r.refinement_change < 1e-6, "{r:?}");
        let finer = invariant_oracle_n2(&f, &OracleOptions { points: 1201, ..Default::default() }).unwrap();
        assert!((finer.mean_abs - r.mean_abs).abs() < 1e-6);
        assert!((finer.second_moment - r.second_moment).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_gradient_and_higher_dimensions() {
        let f = ForceField::new(2, Drift::Linear { gamma: 1.0 }, Interaction::Zero, 2f64.sqrt()).unwrap();
        assert!(invariant_oracle_n2(&f, &OracleOptions::default()).is_err());
    }
}
