use std::fmt;
use std::sync::Arc;

use crate::distance::KappaSpec;
use crate::{Error, Result};

pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// User-supplied drift `b`, optionally with a potential `U` such that `b = -∇U`.
#[derive(Clone)]
pub struct CustomDrift {
    pub name: String,
    pub force: VectorFn,
    pub potential: Option<ScalarFn>,
}

/// User-supplied interaction `K`, optionally with an even potential `V` such that `K = -∇V`.
#[derive(Clone)]
pub struct CustomInteraction {
    pub name: String,
    pub force: VectorFn,
    pub potential: Option<ScalarFn>,
}

/// Confining drift `b: ℝ^d → ℝ^d`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `b(x) = -γ x`
    Linear { gamma: f64 },
    /// `b(x) = x (1 - |x|²)`, the gradient flow of `|x|⁴/4 - |x|²/2`.
    DoubleWell,
    Custom(CustomDrift),
}

/// Pairwise interaction `K: ℝ^d → ℝ^d`, evaluated on `x^i - x^j`.
#[derive(Clone)]
pub enum Interaction {
    Zero,
    /// `K(x) = a x` (unbounded; used for hand-checkable sums).
    Linear { a: f64 },
    /// `K(x) = -a x exp(-|x|²/2)`; bounded with bounded derivatives.
    Gaussian { a: f64 },
    Custom(CustomInteraction),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::Linear { gamma } => write!(f, "Linear {{ gamma: {gamma} }}"),
            Drift::DoubleWell => write!(f, "DoubleWell"),
            Drift::Custom(c) => write!(f, "Custom({:?})", c.name),
        }
    }
}

impl fmt::Debug for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interaction::Zero => write!(f, "Zero"),
            Interaction::Linear { a } => write!(f, "Linear {{ a: {a} }}"),
            Interaction::Gaussian { a } => write!(f, "Gaussian {{ a: {a} }}"),
            Interaction::Custom(c) => write!(f, "Custom({:?})", c.name),
        }
    }
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Linear { gamma } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -gamma * xi;
                }
            }
            Drift::DoubleWell => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi * (1.0 - r2);
                }
            }
            Drift::Custom(c) => (c.force)(x, out),
        }
    }

    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Drift::Zero => Some(0.0),
            Drift::Linear { gamma } => Some(0.5 * gamma * r2),
            Drift::DoubleWell => Some(0.25 * r2 * r2 - 0.5 * r2),
            Drift::Custom(c) => c.potential.as_ref().map(|u| u(x)),
        }
    }

    pub fn has_potential(&self) -> bool {
        !matches!(self, Drift::Custom(CustomDrift { potential: None, .. }))
    }
}

impl Interaction {
    #[inline]
    pub fn eval(&self, dx: &[f64], out: &mut [f64]) {
        match self {
            Interaction::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Interaction::Linear { a } => {
                for (o, v) in out.iter_mut().zip(dx) {
                    *o = a * v;
                }
            }
            Interaction::Gaussian { a } => {
                let r2: f64 = dx.iter().map(|v| v * v).sum();
                let s = -a * (-0.5 * r2).exp();
                for (o, v) in out.iter_mut().zip(dx) {
                    *o = s * v;
                }
            }
            Interaction::Custom(c) => (c.force)(dx, out),
        }
    }

    pub fn potential(&self, dx: &[f64]) -> Option<f64> {
        let r2: f64 = dx.iter().map(|v| v * v).sum();
        match self {
            Interaction::Zero => Some(0.0),
            Interaction::Linear { a } => Some(-0.5 * a * r2),
            Interaction::Gaussian { a } => Some(-a * (-0.5 * r2).exp()),
            Interaction::Custom(c) => c.potential.as_ref().map(|v| v(dx)),
        }
    }

    pub fn has_potential(&self) -> bool {
        !matches!(self, Interaction::Custom(CustomInteraction { potential: None, .. }))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Interaction::Zero)
            || matches!(self, Interaction::Linear { a } | Interaction::Gaussian { a } if *a == 0.0)
    }
}

/// Maxima of `|K|`, `|∇K|` and `|∇²K|` (Frobenius norms) for the Gaussian
/// kernel `K(x) = -a x exp(-|x|²/2)` in dimension `d`.
pub fn gaussian_kernel_bounds(a: f64, dim: usize) -> (f64, f64, f64) {
    let a = a.abs();
    let d = dim as f64;
    let k_max = a * (-0.5f64).exp();
    let grad_max = a * d.sqrt();
    // |∇²K|_F = a r sqrt((3d + 6) - 6r² + r⁴) exp(-r²/2); maximise over r ≥ 0.
    let h = |r: f64| {
        let r2 = r * r;
        r * ((3.0 * d + 6.0) - 6.0 * r2 + r2 * r2).max(0.0).sqrt() * (-0.5 * r2).exp()
    };
    let n = 4000;
    let (mut best_r, mut best) = (0.0, 0.0);
    for k in 0..=n {
        let r = 8.0 * k as f64 / n as f64;
        let v = h(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    let step = 8.0 / n as f64;
    let (mut lo, mut hi) = ((best_r - step).max(0.0), best_r + step);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - inv_phi * (hi - lo);
        let m2 = lo + inv_phi * (hi - lo);
        if h(m1) < h(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let hess_max = a * h(0.5 * (lo + hi)).max(best);
    (k_max, grad_max, hess_max)
}

/// Drift, interaction and noise level of an interacting particle system,
/// together with the analytic metadata the theory needs.
#[derive(Clone, Debug)]
pub struct ForceField {
    pub dim: usize,
    pub drift: Drift,
    pub interaction: Interaction,
    pub sigma: f64,
    /// Curvature lower-bound profile `κ(r)` of the drift, when known.
    pub kappa: Option<KappaSpec>,
    /// Bound `L_K` on `|K|, |∇K|, |∇²K|`; `None` when unbounded or unknown.
    pub lk_bound: Option<f64>,
    /// Exponent `q ≥ 2` in the polynomial growth bound on `b` and `∇b`.
    pub growth_exponent: f64,
}

impl ForceField {
    /// Builds a field, filling κ, `L_K` and the growth exponent from the
    /// closed forms of the built-in drifts and kernels.
    pub fn new(dim: usize, drift: Drift, interaction: Interaction, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise amplitude sigma = {sigma} must be positive")));
        }
        let kappa = match &drift {
            Drift::Linear { gamma } if *gamma > 0.0 => {
                Some(KappaSpec::constant(2.0 * gamma / (sigma * sigma))?)
            }
            Drift::DoubleWell => {
                Some(KappaSpec::quartic_well(2.0 / (sigma * sigma))?)
            }
            _ => None,
        };
        let lk_bound = match &interaction {
            Interaction::Zero => Some(0.0),
            Interaction::Linear { a } if *a == 0.0 => Some(0.0),
            Interaction::Linear { .. } => None,
            Interaction::Gaussian { a } => {
                let (k, g, h) = gaussian_kernel_bounds(*a, dim);
                Some(k.max(g).max(h))
            }
            Interaction::Custom(_) => None,
        };
        let growth_exponent = match &drift {
            Drift::DoubleWell => 3.0,
            _ => 2.0,
        };
        Ok(Self {
            dim,
            drift,
            interaction,
            sigma,
            kappa,
            lk_bound,
            growth_exponent,
        })
    }

    pub fn with_kappa(mut self, kappa: KappaSpec) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn with_lk_bound(mut self, lk: f64) -> Self {
        self.lk_bound = Some(lk);
        self
    }

    pub fn with_growth_exponent(mut self, q: f64) -> Result<Self> {
        if !(q >= 2.0) {
            return Err(Error::InvalidInput(format!("growth exponent q = {q} must be at least 2")));
        }
        self.growth_exponent = q;
        Ok(self)
    }

    /// Lower bound for `liminf κ(r)` as declared by the κ profile.
    pub fn kappa_tail(&self) -> Option<f64> {
        self.kappa.as_ref().map(|k| k.tail_bound)
    }

    /// `true` when both potentials are available, i.e. the explicit Gibbs
    /// form of the invariant measure applies for `σ = √2`.
    pub fn is_gradient(&self) -> bool {
        self.drift.has_potential() && self.interaction.has_potential()
    }

    pub fn drift_potential(&self, x: &[f64]) -> Option<f64> {
        self.drift.potential(x)
    }

    pub fn interaction_potential(&self, dx: &[f64]) -> Option<f64> {
        self.interaction.potential(dx)
    }

    /// Smallness threshold `c₀ φ₀ σ² / 16` on `L_K`.
    pub fn smallness_threshold(&self, c0: f64, phi0: f64) -> f64 {
        c0 * phi0 * self.sigma * self.sigma / 16.0
    }

    /// `Some(true)` when `L_K < c₀ φ₀ σ² / 16`; `None` when `L_K` is unknown.
    pub fn satisfies_smallness(&self, c0: f64, phi0: f64) -> Option<bool> {
        self.lk_bound.map(|lk| lk < self.smallness_threshold(c0, phi0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_bounds_one_dimensional_closed_form() {
        // max |x (3 - x²) e^{-x²/2}| is attained at x² = 3 - √6.
        let x2 = 3.0 - 6f64.sqrt();
        let expected = x2.sqrt() * 6f64.sqrt() * (-0.5 * x2).exp();
        let (k, g, h) = gaussian_kernel_bounds(1.0, 1);
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g - 1.0).abs() < 1e-15);
        assert!((h - expected).abs() < 1e-12, "{h} vs {expected}");
    }

    #[test]
    fn potentials_match_forces() {
        let field = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.3 }, 1.0).unwrap();
        let h = 1e-6;
        for &x in &[-1.7, -0.2, 0.4, 2.1] {
            let mut b = [0.0];
            field.drift.eval(&[x], &mut b);
            let du = (field.drift_potential(&[x + h]).unwrap() - field.drift_potential(&[x - h]).unwrap()) / (2.0 * h);
            assert!((b[0] + du).abs() < 1e-7);
            let mut k = [0.0];
            field.interaction.eval(&[x], &mut k);
            let dv = (field.interaction_potential(&[x + h]).unwrap()
                - field.interaction_potential(&[x - h]).unwrap())
                / (2.0 * h);
            assert!((k[0] + dv).abs() < 1e-7);
        }
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(ForceField::new(1, Drift::Zero, Interaction::Zero, 0.0).is_err());
    }
}
