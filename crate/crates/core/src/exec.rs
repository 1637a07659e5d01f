//! Index-space mapping with a data-parallel path behind the `parallel`
//! feature and a sequential fallback without it.
//!
//! Callers hand over a pure per-index closure; each output element is
//! produced by exactly one closure call, so the result is identical for
//! any thread count and for the sequential path. The benches compare the
//! two builds on the characteristic-function workloads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential reference path. Always available; the only path when the
/// `parallel` feature is disabled.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Rayon path: fans the index range out across the thread pool.
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Evaluate `f` on `0..n` collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}
