//! Bounded worker pool that returns results in task-index order.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Run `task(i)` for `i in 0..n` on at most `workers` threads and collect
/// the results ordered by index. One worker runs inline on the caller's
/// thread.
pub fn run_indexed<R, F>(workers: usize, n: usize, task: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    if workers == 1 || n <= 1 {
        return Ok((0..n).map(task).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(n))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(task).collect()))
}

/// Logical CPU count, at least 1.
pub fn available_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
