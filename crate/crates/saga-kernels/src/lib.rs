//! Gated linear attention kernels with verification instrumentation.
//!
//! This crate implements the forward operators of a gated linear attention
//! block — softmax attention, normalized/unnormalized linear attention, the
//! memory-naive gated summation and its Hadamard-decomposed fast path — plus
//! hand-derived backward passes, exact multiply accounting, workspace-element
//! accounting, numerical rank analysis of the aggregated key-value state, and
//! a wall-clock scaling harness.
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`). Correctness suites
//! run in `f64`; timing runs in `f32`.
//!
//! With the default `parallel` feature the dense primitives split large inner
//! loops across a rayon pool; without it every code path is sequential. The
//! timing harness in [`bench`] pins execution to a single thread unless
//! parallelism is explicitly requested, so fitted scaling exponents reflect
//! algorithmic cost rather than thread scheduling.

pub mod analysis;
pub mod attention;
pub mod bench;
mod error;
pub mod grad;
pub mod linalg;
mod parallel;
mod scalar;

pub use error::{KernelError, Result};
pub use parallel::with_single_thread;
pub use scalar::Scalar;
