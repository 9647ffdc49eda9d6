use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::field::ForceField;
use crate::rng::{stream, StreamRole};

/// Search settings for [`estimate_kappa_with`].
#[derive(Clone, Debug)]
pub struct KappaSearch {
    /// Midpoints are sampled from `[-half_width, half_width]^d`.
    pub half_width: f64,
    /// Total number of drift-pair evaluations.
    pub budget: usize,
    pub seed: u64,
}

impl Default for KappaSearch {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            budget: 4000,
            seed: 0,
        }
    }
}

/// Smallest observed value of the curvature quotient at separation `r`.
///
/// Sampling cannot certify an infimum, so `value` is only an upper bound
/// on the true `κ(r)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub r: f64,
    pub value: f64,
    pub midpoint: Vec<f64>,
    pub direction: Vec<f64>,
    pub upper_bound: bool,
}

/// Estimates `inf_{|x-y| = r} -(2/σ²)(x-y)·(b(x)-b(y))/|x-y|²` with the default search.
pub fn estimate_kappa(field: &ForceField, r: f64, search_budget: usize) -> Option<KappaEstimate> {
    estimate_kappa_with(
        field,
        r,
        &KappaSearch {
            budget: search_budget,
            ..KappaSearch::default()
        },
    )
}

/// Grid or random sampling of midpoints and directions followed by compass
/// refinement. Returns `None` for non-finite or non-positive `r`.
pub fn estimate_kappa_with(field: &ForceField, r: f64, search: &KappaSearch) -> Option<KappaEstimate> {
    if !(r.is_finite() && r > 0.0) || search.budget == 0 {
        return None;
    }
    let d = field.dim;
    let scale = 2.0 / (field.sigma * field.sigma);
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let evals = std::cell::Cell::new(0usize);
    let mut quotient = |m: &[f64], u: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        for c in 0..d {
            x[c] = m[c] + 0.5 * r * u[c];
            y[c] = m[c] - 0.5 * r * u[c];
        }
        field.drift.eval(&x, &mut bx);
        field.drift.eval(&y, &mut by);
        let dot: f64 = (0..d).map(|c| u[c] * (bx[c] - by[c])).sum();
        -scale * dot / r
    };

    let l = search.half_width;
    let coarse = (search.budget * 3 / 5).max(1);
    let mut best = (f64::INFINITY, vec![0.0; d], unit_axis(d, 0));
    let consider = |v: f64, m: &[f64], u: &[f64], best: &mut (f64, Vec<f64>, Vec<f64>)| {
        if v < best.0 {
            *best = (v, m.to_vec(), u.to_vec());
        }
    };

    if d == 1 {
        // The quotient is symmetric in the direction sign, so a midpoint grid suffices.
        let pts = if coarse.is_multiple_of(2) { coarse.saturating_sub(1).max(1) } else { coarse };
        let u = [1.0];
        for k in 0..pts {
            let m = if pts == 1 { 0.0 } else { -l + 2.0 * l * k as f64 / (pts - 1) as f64 };
            let v = quotient(&[m], &u);
            consider(v, &[m], &u, &mut best);
        }
    } else {
        let mut rng = stream(search.seed, 0, StreamRole::Search);
        let origin = vec![0.0; d];
        for axis in 0..d {
            let u = unit_axis(d, axis);
            let v = quotient(&origin, &u);
            consider(v, &origin, &u, &mut best);
        }
        let mut m = vec![0.0; d];
        let mut u = vec![0.0; d];
        for _ in d..coarse {
            for c in 0..d {
                m[c] = rng.gen_range(-l..=l);
                u[c] = rng.sample(StandardNormal);
            }
            if !normalize(&mut u) {
                continue;
            }
            let v = quotient(&m, &u);
            consider(v, &m, &u, &mut best);
        }
    }

    // Compass search over midpoint and direction.
    let (mut value, mut m, mut u) = best;
    let mut step = if d == 1 { 2.0 * l / coarse.max(2) as f64 } else { 0.1 * l };
    let mut trial_m = m.clone();
    let mut trial_u = u.clone();
    while evals.get() < search.budget && step > 1e-12 {
        let mut improved = false;
        'dirs: for c in 0..2 * d {
            for sign in [-1.0, 1.0] {
                if evals.get() >= search.budget {
                    break 'dirs;
                }
                trial_m.copy_from_slice(&m);
                trial_u.copy_from_slice(&u);
                if c < d {
                    trial_m[c] += sign * step;
                } else if d > 1 {
                    trial_u[c - d] += sign * step;
                    if !normalize(&mut trial_u) {
                        continue;
                    }
                } else {
                    continue;
                }
                let v = quotient(&trial_m, &trial_u);
                if v < value {
                    value = v;
                    m.copy_from_slice(&trial_m);
                    u.copy_from_slice(&trial_u);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Some(KappaEstimate {
        r,
        value,
        midpoint: m,
        direction: u,
        upper_bound: true,
    })
}

fn unit_axis(d: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[axis] = 1.0;
    e
}

fn normalize(u: &mut [f64]) -> bool {
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 1e-300) {
        return false;
    }
    u.iter_mut().for_each(|v| *v /= n);
    true
}

/// Where `validate_assumptions` samples the fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub half_width: f64,
    /// Lattice points per axis in grid mode (`d ≤ 2`).
    pub points_per_axis: Option<usize>,
    /// Sample count in random mode (`d > 2`).
    pub random_samples: usize,
    pub fd_step: f64,
    pub kappa_budget: usize,
    pub seed: u64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            points_per_axis: None,
            random_samples: 20_000,
            fd_step: 1e-4,
            kappa_budget: 600,
            seed: 0,
        }
    }
}

impl ValidationGrid {
    fn points(&self, d: usize) -> Vec<Vec<f64>> {
        let l = self.half_width;
        if d <= 2 {
            let n = self.points_per_axis.unwrap_or(if d == 1 { 2001 } else { 101 }).max(2);
            let axis: Vec<f64> = (0..n).map(|k| -l + 2.0 * l * k as f64 / (n - 1) as f64).collect();
            if d == 1 {
                axis.iter().map(|&x| vec![x]).collect()
            } else {
                let mut pts = Vec::with_capacity(n * n);
                for &a in &axis {
                    for &b in &axis {
                        pts.push(vec![a, b]);
                    }
                }
                pts
            }
        } else {
            let mut rng = stream(self.seed, 0, StreamRole::Search);
            let mut pts: Vec<Vec<f64>> = (0..self.random_samples)
                .map(|_| (0..d).map(|_| rng.gen_range(-l..=l)).collect())
                .collect();
            // Always include the faces so the outer shell is represented.
            for axis in 0..d {
                for s in [-l, l] {
                    let mut p = vec![0.0; d];
                    p[axis] = s;
                    pts.push(p);
                }
            }
            pts
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallnessCheck {
    pub lk: f64,
    pub c0: f64,
    pub phi0: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Outcome of [`validate_assumptions`]; report-only, never an error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `"analytic"` when a κ profile is attached, otherwise `"numeric"`.
    pub kappa_source: String,
    pub kappa_min: Option<f64>,
    pub kappa_lower_bound_ok: Option<bool>,
    pub kappa_tail_ok: Option<bool>,
    /// Largest amount by which the numeric estimate undercuts the analytic profile.
    pub kappa_profile_violation: Option<f64>,
    pub k_max: f64,
    pub grad_k_max: f64,
    pub hess_k_max: f64,
    pub kernel_bounded: bool,
    pub lk_declared: Option<f64>,
    pub lk_ok: Option<bool>,
    pub growth_exponent: f64,
    pub growth_exponent_observed: f64,
    pub growth_ok: bool,
    pub smallness: Option<SmallnessCheck>,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    /// `true` when no check failed (unknown checks count as passing).
    pub fn passed(&self) -> bool {
        self.kappa_lower_bound_ok != Some(false)
            && self.kappa_tail_ok != Some(false)
            && self.kernel_bounded
            && self.lk_ok != Some(false)
            && self.growth_ok
            && self.smallness.as_ref().is_none_or(|s| s.passes)
    }
}

const GROWTH_SLACK: f64 = 0.25;

/// Grid checks of the standing assumptions: κ lower bound and tail,
/// boundedness of `K` and its first two derivatives, polynomial growth of
/// the drift, and the smallness condition when `(c₀, φ₀)` are given.
pub fn validate_assumptions(
    field: &ForceField,
    grid: &ValidationGrid,
    constants: Option<(f64, f64)>,
) -> AssumptionReport {
    let d = field.dim;
    let l = grid.half_width;
    let h = grid.fd_step;
    let pts = grid.points(d);
    let mut notes = Vec::new();

    let mut kv = vec![0.0; d];
    let mut kp = vec![0.0; d];
    let mut km = vec![0.0; d];
    let mut probe = vec![0.0; d];
    let mut bv = vec![0.0; d];
    let mut inner = [0.0f64; 3];
    let mut outer = [0.0f64; 3];
    let mut total = [0.0f64; 3];
    let mut band_mid = (0.0f64, 0.0f64);
    let mut band_out = (0.0f64, 0.0f64);
    for x in &pts {
        let sup = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();

        field.interaction.eval(x, &mut kv);
        let k_norm = kv.iter().map(|v| v * v).sum::<f64>().sqrt();

        // Jacobian by central differences, Frobenius norm.
        let mut grad2 = 0.0;
        for c in 0..d {
            probe.copy_from_slice(x);
            probe[c] += h;
            field.interaction.eval(&probe, &mut kp);
            probe[c] -= 2.0 * h;
            field.interaction.eval(&probe, &mut km);
            grad2 += kp.iter().zip(&km).map(|(p, m)| ((p - m) / (2.0 * h)).powi(2)).sum::<f64>();
        }

        // Second derivatives ∂_a ∂_b K_c, Frobenius norm over (a, b, c).
        let mut hess2 = 0.0;
        let mut acc = vec![0.0; d];
        for a in 0..d {
            for b in 0..d {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for (sa, sb, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    probe.copy_from_slice(x);
                    probe[a] += sa * h;
                    probe[b] += sb * h;
                    field.interaction.eval(&probe, &mut kp);
                    for c in 0..d {
                        acc[c] += w * kp[c];
                    }
                }
                hess2 += acc.iter().map(|v| (v / (4.0 * h * h)).powi(2)).sum::<f64>();
            }
        }
        let vals = [k_norm, grad2.sqrt(), hess2.sqrt()];
        for k in 0..3 {
            total[k] = total[k].max(vals[k]);
            if sup >= 0.9 * l {
                outer[k] = outer[k].max(vals[k]);
            } else {
                inner[k] = inner[k].max(vals[k]);
            }
        }

        // Drift growth: max(|b|, |∇b|) sampled in two radial bands.
        let in_mid = norm >= 0.4 * l && norm <= 0.5 * l;
        let in_out = norm >= 0.9 * l && norm <= l;
        if in_mid || in_out {
            field.drift.eval(x, &mut bv);
            let b_norm = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut jac2 = 0.0;
            for c in 0..d {
                probe.copy_from_slice(x);
                probe[c] += h;
                field.drift.eval(&probe, &mut kp);
                probe[c] -= 2.0 * h;
                field.drift.eval(&probe, &mut km);
                jac2 += kp.iter().zip(&km).map(|(p, m)| ((p - m) / (2.0 * h)).powi(2)).sum::<f64>();
            }
            let g = b_norm.max(jac2.sqrt());
            if in_mid && g > band_mid.0 {
                band_mid = (g, norm);
            }
            if in_out && g > band_out.0 {
                band_out = (g, norm);
            }
        }
    }

    let kernel_bounded = (0..3).all(|k| outer[k] <= inner[k] * (1.0 + 1e-3) + 1e-6);
    if !kernel_bounded {
        notes.push("interaction or its derivatives grow towards the grid boundary".into());
    }
    let lk_declared = field.lk_bound;
    let lk_ok = lk_declared.map(|lk| {
        let observed = total.iter().fold(0.0f64, |a, &v| a.max(v));
        kernel_bounded && observed <= lk + 1e-6 * (1.0 + lk)
    });

    let growth_exponent_observed = if band_mid.0 > 0.0 && band_out.0 > 0.0 && band_out.1 > band_mid.1 {
        (band_out.0 / band_mid.0).ln() / (band_out.1 / band_mid.1).ln()
    } else {
        0.0
    };
    let growth_ok = growth_exponent_observed <= field.growth_exponent + GROWTH_SLACK;
    if !growth_ok {
        notes.push(format!(
            "drift grows like |x|^{growth_exponent_observed:.2}, above the declared exponent {}",
            field.growth_exponent
        ));
    }

    let search = KappaSearch {
        half_width: l,
        budget: grid.kappa_budget,
        seed: grid.seed,
    };
    let (kappa_source, kappa_min, kappa_lower_bound_ok, kappa_tail_ok, kappa_profile_violation) = match &field.kappa
    {
        Some(spec) => {
            let r_max = (2.0 * spec.tail_radius).max(l);
            let n = 2000;
            let mut min = f64::INFINITY;
            let mut tail_ok = true;
            for k in 1..=n {
                let r = r_max * k as f64 / n as f64;
                let v = spec.kappa.eval(r);
                min = min.min(v);
                if r >= spec.tail_radius && !(v >= spec.tail_bound) {
                    tail_ok = false;
                }
            }
            let lower_ok = min >= spec.lower_bound - 1e-12 && min.is_finite();
            let mut violation = 0.0f64;
            for k in 1..=8 {
                let r = r_max * k as f64 / 8.0;
                if let Some(est) = estimate_kappa_with(field, r, &search) {
                    violation = violation.max(spec.kappa.eval(r) - est.value);
                }
            }
            if violation > 1e-6 {
                notes.push(format!(
                    "numeric search found pairs below the declared kappa profile by {violation:.3e}"
                ));
            }
            ("analytic".to_string(), Some(min), Some(lower_ok && violation <= 1e-6), Some(tail_ok), Some(violation))
        }
        None => {
            let n = 20;
            let est: Vec<f64> = (1..=n)
                .filter_map(|k| estimate_kappa_with(field, l * k as f64 / n as f64, &search))
                .map(|e| e.value)
                .collect();
            let min = est.iter().copied().fold(f64::INFINITY, f64::min);
            let tail_ok = est.iter().rev().take(3).all(|&v| v > 0.0);
            notes.push("kappa estimated numerically; values are upper bounds on the true infimum".into());
            ("numeric".to_string(), Some(min), Some(min.is_finite()), Some(tail_ok), None)
        }
    };

    let smallness = constants.and_then(|(c0, phi0)| {
        lk_declared.map(|lk| {
            let threshold = field.smallness_threshold(c0, phi0);
            SmallnessCheck {
                lk,
                c0,
                phi0,
                threshold,
                passes: lk < threshold,
            }
        })
    });
    if constants.is_some() && lk_declared.is_none() {
        notes.push("smallness condition not checked: no interaction bound declared".into());
    }

    AssumptionReport {
        kappa_source,
        kappa_min,
        kappa_lower_bound_ok,
        kappa_tail_ok,
        kappa_profile_violation,
        k_max: total[0],
        grad_k_max: total[1],
        hess_k_max: total[2],
        kernel_bounded,
        lk_declared,
        lk_ok,
        growth_exponent: field.growth_exponent,
        growth_exponent_observed,
        growth_ok,
        smallness,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::{Drift, Interaction};

    #[test]
    fn linear_drift_is_exact() {
        let sigma = 2f64.sqrt();
        let f = ForceField::new(1, Drift::Linear { gamma: 1.0 }, Interaction::Zero, sigma).unwrap();
        for &r in &[0.1, 1.0, 7.5] {
            let est = estimate_kappa(&f, r, 500).unwrap();
            assert!((est.value - 1.0).abs() < 1e-9);
            assert!(est.upper_bound);
        }
        let f3 = ForceField::new(3, Drift::Linear { gamma: 0.7 }, Interaction::Zero, 1.3).unwrap();
        let est = estimate_kappa(&f3, 2.0, 500).unwrap();
        assert!((est.value - 2.0 * 0.7 / 1.69).abs() < 1e-9);
    }

    #[test]
    fn double_well_matches_closed_form() {
        let sigma = 1.0;
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Zero, sigma).unwrap();
        for &r in &[0.3, 1.0, 2.0, 3.5] {
            let est = estimate_kappa(&f, r, 2000).unwrap();
            let exact = 2.0 / (sigma * sigma) * (r * r / 4.0 - 1.0);
            assert!((est.value - exact).abs() < 1e-3, "r = {r}: {} vs {exact}", est.value);
        }
    }

    #[test]
    fn double_well_two_dimensions_is_bounded_by_profile() {
        let f = ForceField::new(2, Drift::DoubleWell, Interaction::Zero, 1.0).unwrap();
        let est = estimate_kappa(&f, 1.5, 3000).unwrap();
        let exact = 2.0 * (1.5f64.powi(2) / 4.0 - 1.0);
        assert!(est.value >= exact - 1e-9);
        assert!(est.value - exact < 0.05);
    }

    #[test]
    fn zero_drift_gives_zero() {
        let f = ForceField::new(2, Drift::Zero, Interaction::Zero, 1.0).unwrap();
        assert_eq!(estimate_kappa(&f, 1.0, 100).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_bad_radius() {
        let f = ForceField::new(1, Drift::Zero, Interaction::Zero, 1.0).unwrap();
        assert!(estimate_kappa(&f, f64::NAN, 100).is_none());
        assert!(estimate_kappa(&f, -1.0, 100).is_none());
    }

    #[test]
    fn gaussian_kernel_passes() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.05 }, 1.0).unwrap();
        let report = validate_assumptions(&f, &ValidationGrid::default(), None);
        assert!(report.kernel_bounded);
        assert_eq!(report.lk_ok, Some(true));
        assert!(report.growth_ok, "{report:?}");
        assert!(report.passed(), "{report:?}");
        let (k, g, hs) = crate::forces::gaussian_kernel_bounds(0.05, 1);
        assert!((report.k_max - k).abs() < 1e-6);
        assert!((report.grad_k_max - g).abs() < 1e-6);
        assert!((report.hess_k_max - hs).abs() < 1e-4);
    }

    #[test]
    fn zero_kernel_always_passes_smallness() {
        let f = ForceField::new(1, Drift::Linear { gamma: 1.0 }, Interaction::Zero, 1.0).unwrap();
        let report = validate_assumptions(&f, &ValidationGrid::default(), Some((0.1, 0.5)));
        assert_eq!(report.smallness.as_ref().unwrap().lk, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn unbounded_kernel_fails() {
        let f = ForceField::new(1, Drift::Linear { gamma: 1.0 }, Interaction::Linear { a: 1.0 }, 1.0).unwrap();
        let report = validate_assumptions(&f, &ValidationGrid::default(), None);
        assert!(!report.kernel_bounded);
        assert!(!report.passed());
    }

    #[test]
    fn two_dimensional_grid_mode() {
        let f = ForceField::new(2, Drift::DoubleWell, Interaction::Gaussian { a: 0.05 }, 1.0).unwrap();
        let report = validate_assumptions(&f, &ValidationGrid::default(), None);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn too_strong_drift_fails_growth() {
        let f = ForceField::new(1, Drift::DoubleWell, Interaction::Zero, 1.0)
            .unwrap()
            .with_growth_exponent(2.0)
            .unwrap();
        let report = validate_assumptions(&f, &ValidationGrid::default(), None);
        assert!(!report.growth_ok);
    }
}
