//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in input order, and all floating-point
//! reductions happen afterwards in a fixed order, so outputs do not depend on
//! the number of worker threads (or on whether the `parallel` feature is on).

/// How a data-parallel loop is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// runs sequentially.
    #[default]
    Parallel,
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_range(exec, items.len(), |i| f(&items[i]))
}

/// Splits `0..n` into shards of `shard` items (the last one possibly short).
/// The split depends only on `n` and `shard`.
pub fn shards(n: usize, shard: usize) -> Vec<std::ops::Range<usize>> {
    let shard = shard.max(1);
    (0..n.div_ceil(shard))
        .map(|i| i * shard..((i + 1) * shard).min(n))
        .collect()
}

/// Pairwise (tree) summation with a structure that depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
