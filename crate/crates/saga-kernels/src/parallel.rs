//! Thin dispatch layer between rayon and plain sequential loops.
//!
//! Primitives call [`for_each_row`] with a work estimate; small problems stay
//! sequential even when the `parallel` feature is enabled, so per-call
//! overhead never dominates tiny kernels.

/// Problems below this many scalar operations are never parallelized.
#[cfg(feature = "parallel")]
pub(crate) const PAR_MIN_OPS: usize = 1 << 15;

#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<T, F>(data: &mut [T], row_len: usize, total_ops: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    use rayon::prelude::*;
    if total_ops >= PAR_MIN_OPS {
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        data.chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<T, F>(data: &mut [T], row_len: usize, _total_ops: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Runs `f` with at most one worker thread when `single` is set, regardless
/// of how the process-wide pool is configured. Used by the timing harness so
/// scaling fits measure the algorithm, not the scheduler.
#[cfg(feature = "parallel")]
pub fn with_single_thread<R: Send>(single: bool, f: impl FnOnce() -> R + Send) -> R {
    if single {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    } else {
        f()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_single_thread<R: Send>(_single: bool, f: impl FnOnce() -> R + Send) -> R {
    f()
}
