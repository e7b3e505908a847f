//! Replicate-level parallelism. Chains own their state and replicated work
//! is embarrassingly parallel under seed splitting, so the only shared
//! machinery needed is an indexed map over replicate indices.
//!
//! With the default `parallel` feature the map runs on the rayon pool
//! configured by the caller; without it the same API falls back to a plain
//! sequential loop.

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is
/// enabled. Results are returned in index order regardless of scheduling.
pub fn map_replicates<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replicates_seq(count, f)
    }
}

/// The sequential path, always available; the criterion bench compares it
/// against the parallel one.
pub fn map_replicates_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
