//! Worker pool for Monte Carlo fan-out. `RPS_THREADS` caps the worker count
//! (unset or 0 means one worker per core). Results always come back in index
//! order, so reductions over them do not depend on scheduling.

use std::sync::OnceLock;

use rayon::prelude::*;

pub const THREADS_ENV: &str = "RPS_THREADS";

pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0)
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .expect("failed to build worker pool")
    })
}

/// `(0..n).map(f)` evaluated on the pool, in index order.
pub fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}

/// Sample mean and standard error of the mean (sample standard deviation / sqrt(n)).
pub fn mean_sem(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
