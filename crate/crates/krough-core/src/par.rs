//! Thin data-parallel layer. With the `parallel` feature the helpers fan out
//! over rayon's pool; without it they run the same closures sequentially, so
//! results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::sync::atomic::{AtomicBool, Ordering};

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces the sequential code path at run time even in a parallel build.
/// Used by the benchmarks; outputs do not change.
pub fn force_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::Relaxed);
}

#[cfg(feature = "parallel")]
fn go_parallel() -> bool {
    !SEQUENTIAL.load(Ordering::Relaxed)
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Runs `f(chunk_index, chunk)` on consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Sum of `f(i)` over `0..n`. The reduction tree differs between the two
/// modes, so the last bits may differ; callers needing bit-identical output
/// should use [`map_range`] and sum sequentially.
pub fn sum_range<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel() {
        return (0..n).into_par_iter().map(f).sum();
    }
    (0..n).map(f).sum()
}

/// True when the crate was compiled with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
