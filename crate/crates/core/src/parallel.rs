//! Data-parallel helpers with a sequential fallback.
//!
//! Everything in this crate that fans out over independent work items
//! (multi-start descents, Monte Carlo draws, grid points, sweep points)
//! goes through [`map_indexed`]. With the `parallel` feature (default) the
//! map runs on rayon; without it, sequentially. Output order is the input
//! order in both modes, so results are identical regardless of thread count
//! as long as reductions happen on the returned `Vec`.

/// Sequential reference implementation, always available. The benchmarks
/// compare this against the rayon path on the same workloads.
pub fn map_indexed_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    map_indexed_seq(items, f)
}

/// Convenience for `0..n` fan-out without materializing an input slice.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_indexed(&idx, |_, &i| f(i))
}

pub fn map_range_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_indexed(&xs, |i, x| i as u64 * 31 + x);
        let b = map_indexed_seq(&xs, |i, x| i as u64 * 31 + x);
        assert_eq!(a, b);
    }
}
