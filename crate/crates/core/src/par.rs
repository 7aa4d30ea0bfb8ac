//! Thin wrappers over the data-parallel inner loops.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. Every wrapper preserves input order in its output,
//! so results are identical for any thread count, including one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum items per rayon job; below this splitting costs more than it buys.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 256;

pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .with_min_len(MIN_CHUNK)
            .map(f)
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().with_min_len(1).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// In-place elementwise update `v[i] = f(i, v[i])`.
pub fn update_values<F>(values: &mut [f64], f: F)
where
    F: Fn(usize, f64) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        values
            .par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .for_each(|(i, v)| *v = f(i, *v));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, v) in values.iter_mut().enumerate() {
            *v = f(i, *v);
        }
    }
}
