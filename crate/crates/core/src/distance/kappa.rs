use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Curvature lower-bound profile `κ(r)` on `(0, ∞)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kappa {
    Constant { value: f64 },
    /// `slope · r + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `max(slope · r + offset, floor)`
    RampFloor { slope: f64, offset: f64, floor: f64 },
    /// `scale · (r²/4 - 1)`, the exact profile of the double-well drift.
    QuarticWell { scale: f64 },
    #[serde(skip)]
    Custom(RadialFn),
}

impl fmt::Debug for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Constant { value } => write!(f, "Constant({value})"),
            Kappa::Affine { slope, intercept } => write!(f, "Affine({slope} r + {intercept})"),
            Kappa::RampFloor { slope, offset, floor } => write!(f, "RampFloor(max({slope} r + {offset}, {floor}))"),
            Kappa::QuarticWell { scale } => write!(f, "QuarticWell({scale} (r²/4 - 1))"),
            Kappa::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Kappa {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Kappa::Constant { value } => *value,
            Kappa::Affine { slope, intercept } => slope * r + intercept,
            Kappa::RampFloor { slope, offset, floor } => (slope * r + offset).max(*floor),
            Kappa::QuarticWell { scale } => scale * (0.25 * r * r - 1.0),
            Kappa::Custom(k) => k(r),
        }
    }

    /// Negative part `κ(r)⁻ = max(-κ(r), 0)`.
    #[inline]
    pub fn negative_part(&self, r: f64) -> f64 {
        (-self.eval(r)).max(0.0)
    }
}

/// A κ profile together with the bounds that make the radii computable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaSpec {
    pub kappa: Kappa,
    /// `inf κ` over `(0, ∞)`.
    pub lower_bound: f64,
    /// Lower bound of κ beyond `tail_radius`.
    pub tail_bound: f64,
    pub tail_radius: f64,
}

const CHECK_POINTS: usize = 4000;

impl KappaSpec {
    /// Validates the profile on a test grid: finite values, the declared lower
    /// and tail bounds, and no jump discontinuities.
    pub fn new(kappa: Kappa, lower_bound: f64, tail_bound: f64, tail_radius: f64) -> Result<Self> {
        if !(lower_bound.is_finite() && tail_bound.is_finite() && tail_radius.is_finite() && tail_radius >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "kappa bounds must be finite (lower {lower_bound}, tail {tail_bound} beyond {tail_radius})"
            )));
        }
        let spec = Self {
            kappa,
            lower_bound,
            tail_bound,
            tail_radius,
        };
        spec.check_grid()?;
        Ok(spec)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(Kappa::Constant { value }, value, value, 0.0)
    }

    /// `κ(r) = max(r/(2√2) - 1, 1)`.
    pub fn figure_one() -> Self {
        Self::new(
            Kappa::RampFloor {
                slope: 1.0 / 8f64.sqrt(),
                offset: -1.0,
                floor: 1.0,
            },
            1.0,
            1.0,
            0.0,
        )
        .expect("built-in profile is valid")
    }

    /// Affine profile `slope · r + intercept` with `slope > 0`. The tail
    /// radius is placed past the point where the `R₁` condition is certainly
    /// met, so the computed `R₁` is not inflated by the tail bound.
    pub fn affine(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::InvalidInput(format!("affine kappa needs a positive slope, got {slope}")));
        }
        let zero = (-intercept / slope).max(0.0);
        let tail_radius = zero + (16.0 / slope).cbrt() + 1.0;
        Self::new(
            Kappa::Affine { slope, intercept },
            intercept,
            slope * tail_radius + intercept,
            tail_radius,
        )
    }

    /// `scale · (r²/4 - 1)` with the tail radius chosen as in [`KappaSpec::affine`].
    pub fn quartic_well(scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidInput(format!("quartic kappa needs a positive scale, got {scale}")));
        }
        let tail_radius = 2.0 + (8.0 / scale).sqrt() + 1.0;
        Self::new(
            Kappa::QuarticWell { scale },
            -scale,
            scale * (0.25 * tail_radius * tail_radius - 1.0),
            tail_radius,
        )
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.kappa.eval(r)
    }

    fn check_extent(&self) -> f64 {
        (2.0 * self.tail_radius).max(10.0)
    }

    fn check_grid(&self) -> Result<()> {
        let extent = self.check_extent();
        let rs: Vec<f64> = (1..=CHECK_POINTS).map(|k| extent * k as f64 / CHECK_POINTS as f64).collect();
        let vals: Vec<f64> = rs.iter().map(|&r| self.eval(r)).collect();
        for (&r, &v) in rs.iter().zip(&vals) {
            if !v.is_finite() {
                return Err(Error::AssumptionViolation(format!("kappa({r}) is not finite")));
            }
            if v < self.lower_bound - 1e-12 * (1.0 + self.lower_bound.abs()) {
                return Err(Error::AssumptionViolation(format!(
                    "kappa({r}) = {v} is below the declared lower bound {}",
                    self.lower_bound
                )));
            }
            if r >= self.tail_radius && v < self.tail_bound - 1e-12 * (1.0 + self.tail_bound.abs()) {
                return Err(Error::AssumptionViolation(format!(
                    "kappa({r}) = {v} is below the tail bound {} beyond r = {}",
                    self.tail_bound, self.tail_radius
                )));
            }
        }
        // Zoom into the largest steps; a continuous profile flattens out.
        let mut steps: Vec<(f64, usize)> = vals.windows(2).enumerate().map(|(k, w)| ((w[1] - w[0]).abs(), k)).collect();
        steps.sort_by(|a, b| b.0.total_cmp(&a.0));
        for &(_, k) in steps.iter().take(5) {
            let (mut lo, mut hi) = (rs[k], rs[k + 1]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (fl, fm, fh) = (self.eval(lo), self.eval(mid), self.eval(hi));
                if (fm - fl).abs() >= (fh - fm).abs() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let jump = (self.eval(hi) - self.eval(lo)).abs();
            let scale = 1.0 + self.eval(lo).abs();
            if jump > 1e-6 * scale {
                return Err(Error::AssumptionViolation(format!(
                    "kappa jumps by {jump:.3e} near r = {lo}"
                )));
            }
        }
        Ok(())
    }
}

const RADII_GRID: usize = 20_000;

/// `R₀ = inf{R ≥ 0 : κ ≥ 0 on [R, ∞)}` and
/// `R₁ = inf{R ≥ R₀ : κ(r) R (R - R₀) ≥ 16 for all r ≥ R}`.
///
/// The profile is scanned on `[0, S]` and bisected between grid nodes; beyond
/// `S` only `κ ≥ tail_bound` is used, which keeps `R₁` valid (possibly
/// conservative) for any profile honouring its declared tail bound.
pub fn compute_radii(spec: &KappaSpec) -> Result<(f64, f64)> {
    let tb = spec.tail_bound;
    if !(tb > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "kappa must be positive at large separations; tail bound is {tb}"
        )));
    }
    let k = |r: f64| spec.eval(r.max(f64::MIN_POSITIVE));
    let s = spec.tail_radius;

    let r0 = if s == 0.0 {
        0.0
    } else {
        let nodes: Vec<f64> = (0..=RADII_GRID).map(|i| s * i as f64 / RADII_GRID as f64).collect();
        match nodes.iter().rposition(|&r| k(r) < 0.0) {
            None => 0.0,
            Some(last) if last == RADII_GRID => s,
            Some(last) => {
                let (mut lo, mut hi) = (nodes[last], nodes[last + 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if k(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    };

    let from_tail = 0.5 * (r0 + (r0 * r0 + 64.0 / tb).sqrt());
    if s <= r0 {
        return Ok((r0, from_tail.max(r0)));
    }
    // Suffix minima of κ over [R, S], capped by the tail bound.
    let nodes: Vec<f64> = (0..=RADII_GRID).map(|i| r0 + (s - r0) * i as f64 / RADII_GRID as f64).collect();
    let mut suffix = vec![tb; nodes.len() + 1];
    for i in (0..nodes.len()).rev() {
        suffix[i] = suffix[i + 1].min(k(nodes[i]));
    }
    let condition = |r: f64, inf: f64| inf * r * (r - r0) >= 16.0;
    let Some(first) = (0..nodes.len()).find(|&i| condition(nodes[i], suffix[i])) else {
        return Ok((r0, from_tail.max(s)));
    };
    if first == 0 {
        return Ok((r0, nodes[0]));
    }
    let (mut lo, mut hi) = (nodes[first - 1], nodes[first]);
    let right_inf = suffix[first];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let inf = k(mid).min(right_inf);
        if condition(mid, inf) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((r0, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_two() {
        let (r0, r1) = compute_radii(&KappaSpec::constant(2.0).unwrap()).unwrap();
        assert_eq!(r0, 0.0);
        assert!((r1 - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn figure_one_profile() {
        let (r0, r1) = compute_radii(&KappaSpec::figure_one()).unwrap();
        assert_eq!(r0, 0.0);
        assert!((r1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn affine_profile_matches_cubic_root() {
        // κ = r - 1: R₀ = 1 and R₁ solves R (R - 1)² = 16.
        let (r0, r1) = compute_radii(&KappaSpec::affine(1.0, -1.0).unwrap()).unwrap();
        assert!((r0 - 1.0).abs() < 1e-12);
        let (mut lo, mut hi) = (1.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (mid - 1.0) * (mid - 1.0) >= 16.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((r1 - hi).abs() < 1e-10, "{r1} vs {hi}");
        assert!((r1 - 3.226772).abs() < 1e-6);
    }

    #[test]
    fn quartic_well_radii() {
        // scale = 1: R₀ = 2 and (R²/4 - 1) R (R - 2) = 16.
        let (r0, r1) = compute_radii(&KappaSpec::quartic_well(1.0).unwrap()).unwrap();
        assert!((r0 - 2.0).abs() < 1e-12);
        let lhs = (r1 * r1 / 4.0 - 1.0) * r1 * (r1 - 2.0);
        assert!((lhs - 16.0).abs() < 1e-8, "{lhs}");
    }

    #[test]
    fn non_positive_tail_rejected() {
        let spec = KappaSpec::new(Kappa::Constant { value: 0.0 }, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(compute_radii(&spec), Err(Error::AssumptionViolation(_))));
    }

    #[test]
    fn bounds_are_checked() {
        assert!(KappaSpec::new(Kappa::Affine { slope: 1.0, intercept: -1.0 }, 0.0, 1.0, 2.0).is_err());
        assert!(KappaSpec::new(Kappa::Constant { value: 1.0 }, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn discontinuity_detected() {
        let step: RadialFn = Arc::new(|r| if r < 3.0 { 1.0 } else { 2.0 });
        assert!(KappaSpec::new(Kappa::Custom(step), 1.0, 1.0, 0.0).is_err());
        let smooth: RadialFn = Arc::new(|r: f64| 1.0 + r.sin().powi(2));
        assert!(KappaSpec::new(Kappa::Custom(smooth), 1.0, 1.0, 0.0).is_ok());
    }
}
