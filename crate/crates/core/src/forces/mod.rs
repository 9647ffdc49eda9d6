//! Force fields, full and batched interaction sums, and diagnostics for the
//! standing assumptions on drift and interaction.

mod field;
mod state;
mod validate;

pub use field::{
    gaussian_kernel_bounds, CustomDrift, CustomInteraction, Drift, ForceField, Interaction, ScalarFn, VectorFn,
};
pub use state::{SimParams, SystemState};
pub use validate::{
    estimate_kappa, estimate_kappa_with, validate_assumptions, AssumptionReport, KappaEstimate, KappaSearch,
    SmallnessCheck, ValidationGrid,
};

use crate::dynamics::Partition;
use crate::{Error, Result};

/// Largest system for which [`mean_partition_force`] enumerates partitions.
pub const MAX_ENUMERATION_N: usize = 10;

/// `bⁱ(x) = b(xⁱ) + (1/(N-1)) Σ_{j≠i} K(xⁱ - xʲ)` for every particle, flattened `N × d`.
pub fn full_interaction_force(state: &SystemState, field: &ForceField) -> Result<Vec<f64>> {
    check_dims(state, field)?;
    let mut out = vec![0.0; state.positions().len()];
    let mut pairs = 0;
    full_force_into(state.positions(), state.n_particles(), field, &mut out, &mut pairs)?;
    Ok(out)
}

/// Force with the interaction restricted to each particle's batch and
/// normalised by `p - 1`.
pub fn batch_interaction_force(state: &SystemState, field: &ForceField, partition: &Partition) -> Result<Vec<f64>> {
    check_dims(state, field)?;
    partition.validate(state.n_particles())?;
    let mut out = vec![0.0; state.positions().len()];
    let mut pairs = 0;
    batch_force_into(state.positions(), state.n_particles(), field, partition, &mut out, &mut pairs)?;
    Ok(out)
}

/// Average of the batch force over every partition of `{0..N}` into batches of size `p`.
///
/// Every partition is equally likely under the random batch division, so this
/// is the exact expectation of the batch force.
pub fn mean_partition_force(state: &SystemState, field: &ForceField, batch_size: usize) -> Result<Vec<f64>> {
    check_dims(state, field)?;
    let n = state.n_particles();
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(format!(
            "enumerating partitions needs N <= {MAX_ENUMERATION_N}, got N = {n}"
        )));
    }
    let partitions = enumerate_partitions(n, batch_size)?;
    let d = state.dim();
    let mut drift = vec![0.0; state.positions().len()];
    for (x, out) in state.positions().chunks(d).zip(drift.chunks_mut(d)) {
        field.drift.eval(x, out);
    }
    // Only the interaction part is averaged, so a zero kernel reproduces the drift exactly.
    let mut mean = vec![0.0; drift.len()];
    let mut buf = vec![0.0; mean.len()];
    let mut pairs = 0;
    for partition in &partitions {
        batch_force_into(state.positions(), n, field, partition, &mut buf, &mut pairs)?;
        for ((m, b), a) in mean.iter_mut().zip(&buf).zip(&drift) {
            *m += b - a;
        }
    }
    let count = partitions.len() as f64;
    for (m, a) in mean.iter_mut().zip(&drift) {
        *m = *m / count + a;
    }
    Ok(mean)
}

/// Number of unordered partitions of `n` labelled items into batches of size
/// `p`: `n! / (q! (p!)^q)` with `q = n / p`.
pub fn partition_count(n: usize, p: usize) -> Result<u128> {
    if p == 0 || !n.is_multiple_of(p) {
        return Err(Error::InvalidInput(format!("batch size {p} does not divide {n}")));
    }
    let q = n / p;
    let fact = |k: usize| (1..=k as u128).product::<u128>();
    Ok(fact(n) / (fact(q) * fact(p).pow(q as u32)))
}

/// All partitions of `{0..n}` into batches of size `p`, in canonical form.
pub fn enumerate_partitions(n: usize, p: usize) -> Result<Vec<Partition>> {
    if p < 2 || !n.is_multiple_of(p) {
        return Err(Error::InvalidInput(format!(
            "batch size p = {p} must be at least 2 and divide N = {n}"
        )));
    }
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(format!(
            "enumerating partitions needs N <= {MAX_ENUMERATION_N}, got N = {n}"
        )));
    }
    let mut out = Vec::new();
    let remaining: Vec<usize> = (0..n).collect();
    let mut current = Vec::new();
    extend_partitions(&remaining, p, &mut current, &mut out);
    Ok(out)
}

fn extend_partitions(remaining: &[usize], p: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Partition>) {
    if remaining.is_empty() {
        out.push(Partition::from_canonical(current.clone(), 0));
        return;
    }
    let head = remaining[0];
    let rest = &remaining[1..];
    // Choose the p-1 companions of the smallest unassigned index.
    let mut chosen = Vec::with_capacity(p - 1);
    choose(rest, p - 1, 0, &mut chosen, &mut |companions| {
        let mut batch = Vec::with_capacity(p);
        batch.push(head);
        batch.extend_from_slice(companions);
        let left: Vec<usize> = rest.iter().copied().filter(|j| !companions.contains(j)).collect();
        current.push(batch);
        extend_partitions(&left, p, current, out);
        current.pop();
    });
}

fn choose(items: &[usize], k: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let need = k - chosen.len();
    for idx in start..=items.len().saturating_sub(need) {
        chosen.push(items[idx]);
        choose(items, k, idx + 1, chosen, visit);
        chosen.pop();
    }
}

fn check_dims(state: &SystemState, field: &ForceField) -> Result<()> {
    if state.dim() != field.dim {
        return Err(Error::InvalidInput(format!(
            "state dimension {} differs from field dimension {}",
            state.dim(),
            field.dim
        )));
    }
    if state.n_particles() < 2 {
        return Err(Error::InvalidInput("interaction sums need N >= 2".into()));
    }
    Ok(())
}

/// Generic pair loop; monomorphised per kernel so the hot loop inlines it.
macro_rules! with_kernel {
    ($interaction:expr, $k:ident => $body:expr) => {
        match $interaction {
            Interaction::Zero => {
                let $k = |_: &[f64], out: &mut [f64]| out.iter_mut().for_each(|o| *o = 0.0);
                $body
            }
            Interaction::Linear { a } => {
                let a = *a;
                let $k = move |dx: &[f64], out: &mut [f64]| {
                    for (o, v) in out.iter_mut().zip(dx) {
                        *o = a * v;
                    }
                };
                $body
            }
            Interaction::Gaussian { a } => {
                let a = *a;
                let $k = move |dx: &[f64], out: &mut [f64]| {
                    let r2: f64 = dx.iter().map(|v| v * v).sum();
                    let s = -a * (-0.5 * r2).exp();
                    for (o, v) in out.iter_mut().zip(dx) {
                        *o = s * v;
                    }
                };
                $body
            }
            Interaction::Custom(c) => {
                let f = &c.force;
                let $k = |dx: &[f64], out: &mut [f64]| f(dx, out);
                $body
            }
        }
    };
}

pub(crate) fn full_force_into(
    x: &[f64],
    n: usize,
    field: &ForceField,
    out: &mut [f64],
    pairs: &mut u64,
) -> Result<()> {
    let d = field.dim;
    with_kernel!(&field.interaction, kernel => full_sum(x, n, d, &field.drift, &kernel, out));
    *pairs += (n * (n - 1)) as u64;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(locate_non_finite(x, n, field));
    }
    Ok(())
}

pub(crate) fn batch_force_into(
    x: &[f64],
    n: usize,
    field: &ForceField,
    partition: &Partition,
    out: &mut [f64],
    pairs: &mut u64,
) -> Result<()> {
    let d = field.dim;
    with_kernel!(&field.interaction, kernel => batch_sum(x, d, &field.drift, &kernel, partition, out));
    let p = partition.batch_size();
    *pairs += (n * (p - 1)) as u64;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(locate_non_finite(x, n, field));
    }
    Ok(())
}

#[inline(always)]
fn full_sum<K: Fn(&[f64], &mut [f64])>(x: &[f64], n: usize, d: usize, drift: &Drift, kernel: &K, out: &mut [f64]) {
    let mut dx = vec![0.0; d];
    let mut kv = vec![0.0; d];
    let mut acc = vec![0.0; d];
    let denom = (n - 1) as f64;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = &x[j * d..(j + 1) * d];
            for c in 0..d {
                dx[c] = xi[c] - xj[c];
            }
            kernel(&dx, &mut kv);
            for c in 0..d {
                acc[c] += kv[c];
            }
        }
        let row = &mut out[i * d..(i + 1) * d];
        drift.eval(xi, row);
        for c in 0..d {
            row[c] += acc[c] / denom;
        }
    }
}

#[inline(always)]
fn batch_sum<K: Fn(&[f64], &mut [f64])>(
    x: &[f64],
    d: usize,
    drift: &Drift,
    kernel: &K,
    partition: &Partition,
    out: &mut [f64],
) {
    let mut dx = vec![0.0; d];
    let mut kv = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for batch in partition.batches() {
        let denom = (batch.len() - 1) as f64;
        for &i in batch {
            let xi = &x[i * d..(i + 1) * d];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &j in batch {
                if j == i {
                    continue;
                }
                let xj = &x[j * d..(j + 1) * d];
                for c in 0..d {
                    dx[c] = xi[c] - xj[c];
                }
                kernel(&dx, &mut kv);
                for c in 0..d {
                    acc[c] += kv[c];
                }
            }
            let row = &mut out[i * d..(i + 1) * d];
            drift.eval(xi, row);
            for c in 0..d {
                row[c] += acc[c] / denom;
            }
        }
    }
}

fn locate_non_finite(x: &[f64], n: usize, field: &ForceField) -> Error {
    let d = field.dim;
    let mut buf = vec![0.0; d];
    let mut dx = vec![0.0; d];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        field.drift.eval(xi, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Error::NonFiniteForce {
                particle: i,
                partner: None,
            };
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            for c in 0..d {
                dx[c] = xi[c] - x[j * d + c];
            }
            field.interaction.eval(&dx, &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Error::NonFiniteForce {
                    particle: i,
                    partner: Some(j),
                };
            }
        }
    }
    // Finite terms whose sum overflowed.
    Error::NonFiniteForce {
        particle: 0,
        partner: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(drift: Drift, interaction: Interaction) -> ForceField {
        ForceField::new(1, drift, interaction, 1.0).unwrap()
    }

    #[test]
    fn pure_linear_drift() {
        let f = field(Drift::Linear { gamma: 1.0 }, Interaction::Zero);
        let s = SystemState::from_scalars(&[1.0, -1.0]).unwrap();
        assert_eq!(full_interaction_force(&s, &f).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn hand_sum_three_particles() {
        let f = field(Drift::Zero, Interaction::Linear { a: -1.0 });
        let s = SystemState::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let forces = full_interaction_force(&s, &f).unwrap();
        // -(1/2)((0-1) + (0-2))
        assert_eq!(forces[0], 1.5);
    }

    #[test]
    fn single_pair_batch() {
        let f = field(Drift::Zero, Interaction::Linear { a: -1.0 });
        let s = SystemState::from_scalars(&[0.0, 1.0, 2.0, 4.0]).unwrap();
        let part = Partition::new(vec![vec![0, 1], vec![2, 3]], 0).unwrap();
        let forces = batch_interaction_force(&s, &f, &part).unwrap();
        assert_eq!(forces, vec![1.0, -1.0, 2.0, -2.0]);
    }

    #[test]
    fn single_batch_is_bitwise_full() {
        let f = field(Drift::DoubleWell, Interaction::Gaussian { a: 0.7 });
        let s = SystemState::from_scalars(&[0.3, -1.2, 2.5, 0.01, -0.6, 1.1]).unwrap();
        let part = Partition::single(6);
        let full = full_interaction_force(&s, &f).unwrap();
        let batch = batch_interaction_force(&s, &f, &part).unwrap();
        assert_eq!(full, batch);
    }

    #[test]
    fn zero_kernel_gives_drift_only() {
        let f = field(Drift::DoubleWell, Interaction::Zero);
        let s = SystemState::from_scalars(&[0.5, -1.5, 2.0, 0.0]).unwrap();
        let part = Partition::new(vec![vec![0, 3], vec![1, 2]], 0).unwrap();
        let batch = batch_interaction_force(&s, &f, &part).unwrap();
        let expected: Vec<f64> = [0.5f64, -1.5, 2.0, 0.0].iter().map(|x| x * (1.0 - x * x)).collect();
        assert_eq!(batch, expected);
    }

    #[test]
    fn invalid_partition_rejected() {
        let f = field(Drift::Zero, Interaction::Linear { a: 1.0 });
        let s = SystemState::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let part = Partition::new(vec![vec![0, 1], vec![2, 5]], 0).unwrap();
        assert!(matches!(batch_interaction_force(&s, &f, &part), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn partition_counts_match_formula() {
        for &(n, p, expect) in &[(2, 2, 1u128), (4, 2, 3), (6, 2, 15), (6, 3, 10), (8, 4, 35), (8, 2, 105)] {
            assert_eq!(partition_count(n, p).unwrap(), expect);
            let parts = enumerate_partitions(n, p).unwrap();
            assert_eq!(parts.len() as u128, expect);
            let mut uniq = parts.clone();
            uniq.sort_by(|a, b| a.batches().cmp(b.batches()));
            uniq.dedup();
            assert_eq!(uniq.len(), parts.len());
        }
    }

    #[test]
    fn four_particle_pairings_listed() {
        let parts = enumerate_partitions(4, 2).unwrap();
        let listed: Vec<Vec<Vec<usize>>> = parts.iter().map(|p| p.batches().to_vec()).collect();
        assert_eq!(
            listed,
            vec![
                vec![vec![0, 1], vec![2, 3]],
                vec![vec![0, 2], vec![1, 3]],
                vec![vec![0, 3], vec![1, 2]],
            ]
        );
    }

    #[test]
    fn enumeration_refuses_large_systems() {
        let f = field(Drift::Zero, Interaction::Linear { a: 1.0 });
        let s = SystemState::from_scalars(&[0.0; 12]).unwrap();
        assert!(matches!(mean_partition_force(&s, &f, 2), Err(Error::TooLarge(_))));
    }

    #[test]
    fn overflow_names_the_pair() {
        let f = field(Drift::Zero, Interaction::Linear { a: 1e308 });
        let s = SystemState::from_scalars(&[0.0, 1.0, 10.0]).unwrap();
        match full_interaction_force(&s, &f) {
            Err(Error::NonFiniteForce { particle, partner }) => {
                assert_eq!(particle, 0);
                assert_eq!(partner, Some(2));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn exchangeable(xs in proptest::collection::vec(-3.0f64..3.0, 5), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let f = ForceField::new(1, Drift::DoubleWell, Interaction::Gaussian { a: 0.9 }, 1.0).unwrap();
            let s = SystemState::from_scalars(&xs).unwrap();
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let forces = full_interaction_force(&s, &f).unwrap();
            let permuted = full_interaction_force(&s.permuted(&perm).unwrap(), &f).unwrap();
            for (k, &src) in perm.iter().enumerate() {
                // Same multiset of terms; summation order differs only by the permutation.
                prop_assert!((permuted[k] - forces[src]).abs() <= 1e-14 * (1.0 + forces[src].abs()));
            }
        }

        #[test]
        fn unbiased_over_partitions(
            (n, p) in prop_oneof![Just((2usize, 2usize)), Just((4, 2)), Just((6, 2)), Just((6, 3)), Just((8, 2)), Just((8, 4))],
            xs in proptest::collection::vec(-2.5f64..2.5, 16),
        ) {
            let f = ForceField::new(2, Drift::DoubleWell, Interaction::Gaussian { a: 1.3 }, 1.0).unwrap();
            let s = SystemState::new(n, 2, xs[..2 * n].to_vec(), 0.0).unwrap();
            let full = full_interaction_force(&s, &f).unwrap();
            let mean = mean_partition_force(&s, &f, p).unwrap();
            for (a, b) in full.iter().zip(&mean) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
