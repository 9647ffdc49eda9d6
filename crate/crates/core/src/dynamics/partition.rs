use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A division of `{0..N}` into disjoint batches of equal size `p`.
///
/// Stored canonically: each batch sorted ascending and batches ordered by
/// their smallest element, so equal divisions compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    batches: Vec<Vec<usize>>,
    /// Index `n` of the batch interval `[nτ, (n+1)τ)` this division governs.
    pub epoch: u64,
}

impl Partition {
    /// Canonicalises the batches; use [`Partition::validate`] to check them against `N`.
    pub fn new(mut batches: Vec<Vec<usize>>, epoch: u64) -> Result<Self> {
        if batches.is_empty() || batches.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidPartition("batches must be nonempty".into()));
        }
        for b in &mut batches {
            b.sort_unstable();
        }
        batches.sort_by_key(|b| b[0]);
        Ok(Self { batches, epoch })
    }

    pub(crate) fn from_canonical(batches: Vec<Vec<usize>>, epoch: u64) -> Self {
        Self { batches, epoch }
    }

    pub(crate) fn into_batches(self) -> Vec<Vec<usize>> {
        self.batches
    }

    /// The single batch containing every particle.
    pub fn single(n: usize) -> Self {
        Self {
            batches: vec![(0..n).collect()],
            epoch: 0,
        }
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn batch_size(&self) -> usize {
        self.batches[0].len()
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    /// Checks that the batches are disjoint, cover `{0..n}` and share one size `p ≥ 2`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let p = self.batch_size();
        if p < 2 {
            return Err(Error::InvalidPartition(format!("batch size {p} is below 2")));
        }
        let mut seen = vec![false; n];
        for b in &self.batches {
            if b.len() != p {
                return Err(Error::InvalidPartition(format!(
                    "batches have different sizes ({} and {p})",
                    b.len()
                )));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("index {i} is outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {missing} is not covered")));
        }
        Ok(())
    }
}

/// Uniformly random division into `N/p` batches: a Fisher–Yates shuffle of
/// `{0..N}` cut into consecutive blocks of `p`.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Partition> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut scratch = Vec::new();
    sample_into(n, p, rng, &mut perm, &mut scratch)?;
    Ok(Partition::from_canonical(scratch, 0))
}

pub(crate) fn sample_into<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    rng: &mut R,
    perm: &mut Vec<usize>,
    batches: &mut Vec<Vec<usize>>,
) -> Result<()> {
    if p < 2 || !n.is_multiple_of(p) {
        return Err(Error::InvalidInput(format!(
            "batch size p = {p} must be at least 2 and divide N = {n}"
        )));
    }
    perm.clear();
    perm.extend(0..n);
    if p < n {
        perm.shuffle(rng);
    }
    batches.resize_with(n / p, Vec::new);
    for (b, chunk) in batches.iter_mut().zip(perm.chunks(p)) {
        b.clear();
        b.extend_from_slice(chunk);
        b.sort_unstable();
    }
    batches.sort_unstable_by_key(|b| b[0]);
    Ok(())
}
