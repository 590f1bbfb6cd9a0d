//! Data-parallel map with a sequential fallback.
//!
//! All replicate- and fold-level loops go through [`par_map`] so the crate
//! compiles to a pure sequential build with `--no-default-features`. Results
//! come back indexed, so downstream reductions run in a fixed order and the
//! output is identical under any thread count.

/// Caps the global worker pool. A no-op on sequential builds and after the
/// pool has already started.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}

/// Applies `f` to `0..n` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Like [`par_map`] but only spawns tasks when the workload estimate says the
/// per-item cost outweighs scheduling overhead; greedy candidate sweeps hit
/// this with thousands of cheap items.
#[cfg(feature = "parallel")]
pub fn par_map_threshold<T, F>(n: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().with_min_len(min_len).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_threshold<T, F>(n: usize, _min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let out = par_map(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
