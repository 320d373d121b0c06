//! Data-parallel dispatch. With the `parallel` feature (default) the grid
//! evaluations fan out over rayon; without it they run sequentially with the
//! same results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Minimum over `0..n` of a keyed evaluation, parallel when enabled.
#[cfg(feature = "parallel")]
pub fn par_min_by_key<F>(n: u64, eval: F) -> Option<(u64, f64)>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| (i, eval(i)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(not(feature = "parallel"))]
pub fn par_min_by_key<F>(n: u64, eval: F) -> Option<(u64, f64)>
where
    F: Fn(u64) -> f64,
{
    (0..n).map(|i| (i, eval(i))).min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Always-sequential variant, kept callable for benchmarking against the
/// parallel path.
pub fn min_by_key_serial<F>(n: u64, eval: F) -> Option<(u64, f64)>
where
    F: Fn(u64) -> f64,
{
    (0..n).map(|i| (i, eval(i))).min_by(|a, b| a.1.total_cmp(&b.1))
}
