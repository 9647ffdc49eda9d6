//! The concave distance function `f(r)` built from a curvature profile
//! `κ(r)`, its constants, and the system distance `ρ(X, Y) = (1/N) Σ f(|xⁱ - yⁱ|)`.

mod io;
mod kappa;

pub use io::{DistanceHeader, TableRow};
pub use kappa::{compute_radii, Kappa, KappaSpec, RadialFn};

use serde::{Deserialize, Serialize};

use crate::forces::SystemState;
use crate::quadrature::adaptive_simpson;
use crate::{Error, Result};

/// Knobs for [`build_distance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceOptions {
    /// Absolute tolerance for every integral of the construction.
    pub quad_tol: f64,
    /// Table spacing; defaults to `R₁ / 2000`.
    pub grid_step: Option<f64>,
    /// The exported table extends to `r_max_factor · R₁`.
    pub r_max_factor: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            grid_step: None,
            r_max_factor: 10.0,
        }
    }
}

/// Values of the construction at one node of `[0, R₁]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    r: f64,
    phi: f64,
    dphi: f64,
    big_phi: f64,
    big_g: f64,
    f: f64,
    fpp: f64,
}

/// Tabulated `f` with constants `R₀, R₁, η, c₀, φ₀`.
///
/// On `[0, R₁]` values between nodes come from cubic Hermite interpolation
/// of exact node values and derivatives; beyond `R₁` the closed-form rational
/// tail is used, so there is no truncation at `r_max`.
#[derive(Clone, Debug)]
pub struct DistanceFunction {
    pub r0: f64,
    pub r1: f64,
    pub eta: f64,
    pub c0: f64,
    pub phi0: f64,
    pub r_max: f64,
    pub grid_step: f64,
    pub quad_tol: f64,
    nodes: Vec<Node>,
    kappa: Option<Kappa>,
}

/// Builds `f` on `[0, R₁]` by adaptive quadrature.
pub fn build_distance(spec: &KappaSpec, opts: &DistanceOptions) -> Result<DistanceFunction> {
    let (r0, r1) = compute_radii(spec)?;
    if !(opts.quad_tol > 0.0) || !(opts.r_max_factor >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "quad_tol must be positive and r_max_factor at least 1 (got {}, {})",
            opts.quad_tol, opts.r_max_factor
        )));
    }
    let step = opts.grid_step.unwrap_or(r1 / 2000.0);
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("grid step {step} must be positive")));
    }
    let n = ((r1 / step).ceil() as usize).max(1);
    let rs: Vec<f64> = (0..=n).map(|k| if k == n { r1 } else { r1 * k as f64 / n as f64 }).collect();
    let cell_tol = (opts.quad_tol / n as f64).max(1e-16);
    let inner_tol = (cell_tol * 1e-2).max(1e-17);
    let kappa = &spec.kappa;
    let weight = |s: f64| s * kappa.negative_part(s);

    // Cumulative A(r) = ∫₀^r s κ⁻(s) ds, Φ, G = ∫ Φ/φ and H = ∫ Φ²/φ at the nodes.
    let mut a = vec![0.0; n + 1];
    let mut big_phi = vec![0.0; n + 1];
    let mut big_g = vec![0.0; n + 1];
    let mut big_h = vec![0.0; n + 1];
    for k in 0..n {
        let (lo, hi) = (rs[k], rs[k + 1]);
        let flat = [0.0, 0.25, 0.5, 0.75, 1.0].iter().all(|t| weight(lo + t * (hi - lo)) == 0.0);
        let da = if flat { 0.0 } else { adaptive_simpson(weight, lo, hi, cell_tol)? };
        a[k + 1] = a[k] + da;
        let ak = a[k];
        if flat && da == 0.0 {
            // φ is constant on the cell.
            let phi = (-0.25 * ak).exp();
            let p0 = big_phi[k];
            let len = hi - lo;
            big_phi[k + 1] = p0 + phi * len;
            big_g[k + 1] = big_g[k] + (p0 * len + 0.5 * phi * len * len) / phi;
            big_h[k + 1] = big_h[k] + (p0 * p0 * len + p0 * phi * len * len + phi * phi * len.powi(3) / 3.0) / phi;
            continue;
        }
        let phi_at = |s: f64| -> f64 {
            match adaptive_simpson(weight, lo, s, inner_tol) {
                Ok(v) => (-0.25 * (ak + v)).exp(),
                Err(_) => f64::NAN,
            }
        };
        let p0 = big_phi[k];
        let big_phi_at = |s: f64| -> f64 {
            match adaptive_simpson(phi_at, lo, s, inner_tol) {
                Ok(v) => p0 + v,
                Err(_) => f64::NAN,
            }
        };
        big_phi[k + 1] = p0 + adaptive_simpson(phi_at, lo, hi, cell_tol)?;
        big_g[k + 1] = big_g[k] + adaptive_simpson(|s| big_phi_at(s) / phi_at(s), lo, hi, cell_tol)?;
        big_h[k + 1] = big_h[k]
            + adaptive_simpson(
                |s| {
                    let p = big_phi_at(s);
                    p * p / phi_at(s)
                },
                lo,
                hi,
                cell_tol,
            )?;
    }

    let g_r1 = big_g[n];
    if !(g_r1 > 0.0 && g_r1.is_finite()) {
        return Err(Error::AssumptionViolation(format!("degenerate normalisation ∫Φ/φ = {g_r1}")));
    }
    let c0 = 1.0 / g_r1;
    let phi0 = (-0.25 * a[n]).exp();
    let eta = 0.5 * c0 * big_phi[n] / phi0;

    let nodes = (0..=n)
        .map(|k| {
            let r = rs[k];
            let phi = (-0.25 * a[k]).exp();
            let dphi = -0.25 * weight(r) * phi;
            let g = 1.0 - 0.5 * c0 * big_g[k];
            let dg = -0.5 * c0 * big_phi[k] / phi;
            Node {
                r,
                phi,
                dphi,
                big_phi: big_phi[k],
                big_g: big_g[k],
                // Integration by parts: ∫φg = Φg + (c₀/2)∫Φ²/φ.
                f: big_phi[k] * g + 0.5 * c0 * big_h[k],
                fpp: dphi * g + phi * dg,
            }
        })
        .collect();

    Ok(DistanceFunction {
        r0,
        r1,
        eta,
        c0,
        phi0,
        r_max: opts.r_max_factor * r1,
        grid_step: r1 / n as f64,
        quad_tol: opts.quad_tol,
        nodes,
        kappa: Some(spec.kappa.clone()),
    })
}

/// `(y, y')` at `t ∈ [0, 1]` of the cubic Hermite interpolant.
#[inline]
fn hermite(t: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1;
    let slope = (6.0 * t2 - 6.0 * t) / h * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (-6.0 * t2 + 6.0 * t) / h * y1
        + (3.0 * t2 - 2.0 * t) * m1;
    (value, slope)
}

/// Every interpolated quantity at one radius.
#[derive(Clone, Copy, Debug)]
pub struct DistanceValues {
    pub phi: f64,
    pub big_phi: f64,
    pub g: f64,
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

impl DistanceFunction {
    fn core_cell(&self, r: f64) -> (usize, f64) {
        let n = self.nodes.len() - 1;
        let k = ((r / self.grid_step) as usize).min(n - 1);
        let t = ((r - self.nodes[k].r) / self.grid_step).clamp(0.0, 1.0);
        (k, t)
    }

    /// `φ, Φ, g, f, f', f''` at `r ≥ 0`.
    pub fn values(&self, r: f64) -> DistanceValues {
        let r = r.max(0.0);
        if r > self.r1 {
            return self.tail(r);
        }
        let (k, t) = self.core_cell(r);
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let h = b.r - a.r;
        let (phi, dphi_interp) = hermite(t, h, a.phi, a.dphi, b.phi, b.dphi);
        let (big_phi, _) = hermite(t, h, a.big_phi, a.phi, b.big_phi, b.phi);
        let (big_g, _) = hermite(t, h, a.big_g, a.big_phi / a.phi, b.big_g, b.big_phi / b.phi);
        let (f, _) = hermite(t, h, a.f, a.phi * self.g_from(a.big_g), b.f, b.phi * self.g_from(b.big_g));
        let g = self.g_from(big_g);
        let dphi = match &self.kappa {
            Some(kappa) => -0.25 * r * kappa.negative_part(r) * phi,
            None => dphi_interp,
        };
        let dg = -0.5 * self.c0 * big_phi / phi;
        DistanceValues {
            phi,
            big_phi,
            g,
            f,
            fp: phi * g,
            fpp: dphi * g + phi * dg,
        }
    }

    #[inline]
    fn g_from(&self, big_g: f64) -> f64 {
        1.0 - 0.5 * self.c0 * big_g
    }

    fn tail(&self, r: f64) -> DistanceValues {
        let last = self.nodes.last().expect("table has nodes");
        let u = r - self.r1;
        let q = 1.0 + 4.0 * self.eta * u;
        let g = 0.5 - self.eta * u / q;
        let dg = -self.eta / (q * q);
        DistanceValues {
            phi: self.phi0,
            big_phi: last.big_phi + self.phi0 * u,
            g,
            f: last.f + self.phi0 * (0.25 * u + (4.0 * self.eta * u).ln_1p() / (16.0 * self.eta)),
            fp: self.phi0 * g,
            fpp: self.phi0 * dg,
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        if r > self.r1 {
            return self.tail(r).f;
        }
        let (k, t) = self.core_cell(r);
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let fa = a.phi * self.g_from(a.big_g);
        let fb = b.phi * self.g_from(b.big_g);
        hermite(t, b.r - a.r, a.f, fa, b.f, fb).0
    }

    pub fn fp(&self, r: f64) -> f64 {
        self.values(r).fp
    }

    pub fn fpp(&self, r: f64) -> f64 {
        self.values(r).fpp
    }

    pub fn g(&self, r: f64) -> f64 {
        self.values(r).g
    }

    /// Contraction rate `c = c₀ σ² / 2`.
    pub fn contraction_rate(&self, sigma: f64) -> f64 {
        0.5 * self.c0 * sigma * sigma
    }

    /// Table rows `(r, φ, Φ, g, f, f', f'')` on `[0, r_max]` with spacing `grid_step`.
    pub fn table(&self) -> Vec<TableRow> {
        let mut rows: Vec<TableRow> = self
            .nodes
            .iter()
            .map(|n| {
                let g = self.g_from(n.big_g);
                TableRow {
                    r: n.r,
                    phi: n.phi,
                    big_phi: n.big_phi,
                    g,
                    f: n.f,
                    fp: n.phi * g,
                    fpp: n.fpp,
                }
            })
            .collect();
        let mut j = 1usize;
        loop {
            let r = self.r1 + j as f64 * self.grid_step;
            if r > self.r_max * (1.0 + 1e-12) {
                break;
            }
            let v = self.tail(r);
            rows.push(TableRow {
                r,
                phi: v.phi,
                big_phi: v.big_phi,
                g: v.g,
                f: v.f,
                fp: v.fp,
                fpp: v.fpp,
            });
            j += 1;
        }
        rows
    }

    /// Radii of the table rows.
    pub fn table_radii(&self) -> Vec<f64> {
        self.table().iter().map(|row| row.r).collect()
    }

    /// Largest value of `f'' - (1/4) r κ f' + (c₀/2) f` over the table.
    pub fn check_f_inequality(&self, spec: &KappaSpec) -> FInequalityReport {
        let mut worst = FInequalityReport {
            max_residual: f64::NEG_INFINITY,
            at_r: 0.0,
        };
        for row in self.table() {
            let res = row.fpp - 0.25 * row.r * spec.eval(row.r.max(f64::MIN_POSITIVE)) * row.fp + 0.5 * self.c0 * row.f;
            if res > worst.max_residual {
                worst = FInequalityReport {
                    max_residual: res,
                    at_r: row.r,
                };
            }
        }
        worst
    }

    /// Checks every structural property of the construction on the table.
    pub fn check_invariants(&self, spec: &KappaSpec) -> InvariantReport {
        let rows = self.table();
        let f0 = rows[0].f;
        let strictly_increasing = rows.windows(2).all(|w| w[1].f > w[0].f) && rows.iter().all(|r| r.fp > 0.0);
        let max_fpp = rows.iter().map(|r| r.fpp).fold(f64::NEG_INFINITY, f64::max);
        let mut bounds_violation = 0.0f64;
        for row in &rows {
            bounds_violation = bounds_violation.max(0.25 * self.phi0 * row.r - row.f).max(row.f - row.r);
        }
        let f_inequality = self.check_f_inequality(spec);
        let left = self.values(self.r1);
        let right = self.tail(self.r1);
        let eps = 1e-7 * self.r1;
        let slope_left = (self.values(self.r1).g - self.values(self.r1 - eps).g) / eps;
        let slope_right = (self.tail(self.r1 + eps).g - right.g) / eps;
        InvariantReport {
            f0,
            strictly_increasing,
            max_fpp,
            bounds_violation,
            f_inequality_residual: f_inequality.max_residual,
            g_at_r1: left.g,
            g_jump_at_r1: (left.g - right.g).abs(),
            g_slope_jump_at_r1: (slope_left - slope_right).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FInequalityReport {
    pub max_residual: f64,
    pub at_r: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InvariantReport {
    pub f0: f64,
    pub strictly_increasing: bool,
    pub max_fpp: f64,
    /// `max(φ₀ r / 4 - f(r), f(r) - r)`; nonpositive when the bounds hold.
    pub bounds_violation: f64,
    pub f_inequality_residual: f64,
    pub g_at_r1: f64,
    pub g_jump_at_r1: f64,
    pub g_slope_jump_at_r1: f64,
}

impl InvariantReport {
    /// Tolerances: concavity and the bounds to rounding, the f-inequality to `1e-8`.
    pub fn holds(&self) -> bool {
        self.f0 == 0.0
            && self.strictly_increasing
            && self.max_fpp <= 1e-12
            && self.bounds_violation <= 1e-12
            && self.f_inequality_residual <= 1e-8
            && (self.g_at_r1 - 0.5).abs() <= 1e-9
            && self.g_jump_at_r1 <= 1e-9
            && self.g_slope_jump_at_r1 <= 1e-5
    }
}

/// Same as [`DistanceFunction::check_f_inequality`].
pub fn check_f_inequality(df: &DistanceFunction, spec: &KappaSpec) -> FInequalityReport {
    df.check_f_inequality(spec)
}

/// `m(δ) = (σ²/2) sup_{r<δ} r κ(r)⁻ + c₀ σ² δ`, with the supremum taken on a
/// closed grid over `[0, δ]` (κ is continuous).
pub fn m_delta(df: &DistanceFunction, spec: &KappaSpec, sigma: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
    }
    let n = 4000;
    let sup = (1..=n)
        .map(|k| {
            let r = delta * k as f64 / n as f64;
            r * spec.kappa.negative_part(r)
        })
        .fold(0.0f64, f64::max);
    Ok(0.5 * sigma * sigma * sup + df.c0 * sigma * sigma * delta)
}

/// `ρ(X, Y) = (1/N) Σᵢ f(|xⁱ - yⁱ|)`.
pub fn rho(x: &SystemState, y: &SystemState, df: &DistanceFunction) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::InvalidInput("rho needs states of the same shape".into()));
    }
    Ok(rho_slices(x.positions(), y.positions(), x.dim(), df))
}

pub(crate) fn rho_slices(x: &[f64], y: &[f64], dim: usize, df: &DistanceFunction) -> f64 {
    let n = x.len() / dim;
    let mut total = 0.0;
    for i in 0..n {
        let r = (0..dim)
            .map(|c| {
                let z = x[i * dim + c] - y[i * dim + c];
                z * z
            })
            .sum::<f64>()
            .sqrt();
        total += df.f(r);
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_two() -> (KappaSpec, DistanceFunction) {
        let spec = KappaSpec::constant(2.0).unwrap();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        (spec, df)
    }

    #[test]
    fn constant_two_closed_forms() {
        let (_, df) = constant_two();
        let r1 = 8f64.sqrt();
        assert_eq!(df.r0, 0.0);
        assert!((df.r1 - r1).abs() < 1e-12);
        assert!((df.c0 - 0.25).abs() < 1e-12);
        assert_eq!(df.phi0, 1.0);
        assert!((df.eta - 2f64.sqrt() / 4.0).abs() < 1e-12);
        for k in 0..=200 {
            let r = r1 * k as f64 / 200.0;
            assert!((df.f(r) - (r - r.powi(3) / 48.0)).abs() < 1e-12, "r = {r}");
            assert!((df.g(r) - (1.0 - r * r / 16.0)).abs() < 1e-12);
            assert!((df.fpp(r) + r / 8.0).abs() < 1e-12);
        }
        assert!((df.f(r1) - 5.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert!(0.25 * r1 <= df.f(r1) && df.f(r1) <= r1);
    }

    #[test]
    fn constant_two_inequality_and_tail() {
        let (spec, df) = constant_two();
        let report = df.check_f_inequality(&spec);
        assert!(report.max_residual <= 1e-10, "{report:?}");
        // Tail closed form against direct integration of φ₀ g.
        let r = 20.0;
        let tail = adaptive_simpson(|s| df.values(s).fp, df.r1, r, 1e-13).unwrap();
        assert!((df.f(r) - df.f(df.r1) - tail).abs() < 1e-10);
        for r in [0.5, 3.0, 10.0, 20.0] {
            let v = df.values(r);
            let res = v.fpp - 0.5 * r * v.fp + 0.125 * v.f;
            assert!(res <= 1e-10, "r = {r}: {res}");
        }
    }

    #[test]
    fn scaled_constant() {
        let spec = KappaSpec::constant(8.0).unwrap();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        assert!((df.r1 - 2f64.sqrt()).abs() < 1e-12);
        assert!((df.c0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonnegative_kappa_has_flat_phi() {
        let df = build_distance(&KappaSpec::figure_one(), &DistanceOptions::default()).unwrap();
        assert_eq!(df.phi0, 1.0);
        assert_eq!(df.values(1.3).phi, 1.0);
        assert!((df.r1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn figure_one_invariants() {
        let spec = KappaSpec::figure_one();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        let report = df.check_invariants(&spec);
        assert!(report.holds(), "{report:?}");
    }

    #[test]
    fn affine_profile_against_independent_quadrature() {
        // κ = r - 1: φ(r) = exp(-(r²/2 - r³/3)/4) for r ≤ 1.
        let spec = KappaSpec::affine(1.0, -1.0).unwrap();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        let phi = |r: f64| {
            let s = r.min(1.0);
            (-(s * s / 2.0 - s.powi(3) / 3.0) / 4.0).exp()
        };
        assert!((df.phi0 - (-1.0f64 / 24.0).exp()).abs() < 1e-12);
        let big_phi = |r: f64| adaptive_simpson(phi, 0.0, r, 1e-14).unwrap();
        let inv_c0 = adaptive_simpson(|s| big_phi(s) / phi(s), 0.0, df.r1, 1e-10).unwrap();
        assert!((1.0 / df.c0 - inv_c0).abs() < 1e-8);
        for &r in &[0.3, 0.9, 1.7, 3.0] {
            let g = |s: f64| 1.0 - 0.5 * df.c0 * adaptive_simpson(|u| big_phi(u) / phi(u), 0.0, s, 1e-11).unwrap();
            let f = adaptive_simpson(|s| phi(s) * g(s), 0.0, r, 1e-9).unwrap();
            assert!((df.f(r) - f).abs() < 1e-8, "r = {r}: {} vs {f}", df.f(r));
        }
        assert!(df.check_invariants(&spec).holds());
    }

    #[test]
    fn m_delta_cases() {
        let spec = KappaSpec::affine(1.0, -1.0).unwrap();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        let m = m_delta(&df, &spec, 1.0, 0.5).unwrap();
        assert!((m - (0.125 + 0.5 * df.c0)).abs() < 1e-12);
        let ms: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|&d| m_delta(&df, &spec, 1.0, d).unwrap()).collect();
        assert!(ms[0] > ms[1] && ms[1] > ms[2]);
        let (spec2, df2) = constant_two();
        assert!((m_delta(&df2, &spec2, 1.5, 0.2).unwrap() - df2.c0 * 2.25 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn grid_step_does_not_move_constants() {
        let spec = KappaSpec::quartic_well(1.0).unwrap();
        let coarse = build_distance(&spec, &DistanceOptions { grid_step: Some(spec.tail_radius / 500.0), ..Default::default() }).unwrap();
        let fine = build_distance(&spec, &DistanceOptions::default()).unwrap();
        assert!((coarse.c0 - fine.c0).abs() < 1e-9);
        assert!((coarse.phi0 - fine.phi0).abs() < 1e-9);
    }

    #[test]
    fn rho_basics() {
        let (_, df) = constant_two();
        let x = SystemState::new(3, 2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5], 0.0).unwrap();
        assert_eq!(rho(&x, &x, &df).unwrap(), 0.0);
        let y = SystemState::new(3, 2, vec![1.0, 1.0, 2.0, 1.0, 0.5, 3.5], 0.0).unwrap();
        let expected = (df.f(1.0) + df.f(2.0) + df.f(3.0)) / 3.0;
        assert!((rho(&x, &y, &df).unwrap() - expected).abs() < 1e-15);
        let perm = [2, 0, 1];
        let swapped = rho(&x.permuted(&perm).unwrap(), &y.permuted(&perm).unwrap(), &df).unwrap();
        assert!((swapped - expected).abs() < 1e-15);
        let one_x = SystemState::from_scalars(&[0.0]).unwrap();
        let one_y = SystemState::from_scalars(&[50.0]).unwrap();
        assert_eq!(rho(&one_x, &one_y, &df).unwrap(), df.f(50.0));
    }

    fn random_spec() -> impl Strategy<Value = KappaSpec> {
        prop_oneof![
            (0.3f64..6.0).prop_map(|v| KappaSpec::constant(v).unwrap()),
            (0.3f64..2.0, -2.0f64..1.0).prop_map(|(s, c)| KappaSpec::affine(s, c).unwrap()),
            (0.3f64..3.0).prop_map(|s| KappaSpec::quartic_well(s).unwrap()),
            (0.1f64..1.0, -3.0f64..0.0, 0.2f64..2.0).prop_map(|(s, o, fl)| {
                KappaSpec::new(Kappa::RampFloor { slope: s, offset: o, floor: fl }, fl, fl, 0.0).unwrap()
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn built_tables_satisfy_invariants(spec in random_spec()) {
            let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
            let report = df.check_invariants(&spec);
            prop_assert!(report.holds(), "{:?} {:?}", spec, report);
            prop_assert!(df.contraction_rate(1.0) > 0.0);
        }
    }
}
