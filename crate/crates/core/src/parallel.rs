//! Order-preserving per-item parallelism. Results never depend on the thread count.

use rayon::prelude::*;

/// Applies `f` to every item, optionally on `jobs` threads, returning results in input order.
/// On failure the error of the earliest failing item is returned.
pub fn map_ordered<T, R, E, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    let results: Vec<Result<R, E>> = if jobs <= 1 {
        items.iter().map(&f).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(&f).collect(),
        }
    };
    results.into_iter().collect()
}
