use rayon::prelude::*;

use crate::{Error, Result};

/// Runs `job(replica)` for `replica in 0..n_replicas` on a pool of `workers`
/// threads and returns the results in replica order. The first failing
/// replica (by index) determines the error.
pub fn run_ensemble<T, F>(n_replicas: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n_replicas as u64).into_par_iter().map(&job).collect());
    results.into_iter().collect()
}
