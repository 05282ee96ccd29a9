//! Thread-local scalar-multiply counter.
//!
//! Every dense primitive in this crate adds its exact multiply count to the
//! calling thread's counter on entry, before any work is dispatched to a
//! rayon pool. Reads therefore see precisely the multiplies issued by code
//! running on the reading thread, independent of what other threads do.
//!
//! The convention counts scalar multiplications only — additions, divisions,
//! comparisons and transcendental calls are free. This matches the cost
//! accounting verified by [`crate::analysis`].

use std::cell::Cell;

thread_local! {
    static MULS: Cell<u64> = const { Cell::new(0) };
}

/// Cumulative multiply count of the current thread.
pub fn mul_count() -> u64 {
    MULS.with(|c| c.get())
}

pub(crate) fn record_muls(n: u64) {
    MULS.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Multiplies issued by `f` on the current thread.
pub fn count_muls<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = mul_count();
    let out = f();
    (out, mul_count() - before)
}
