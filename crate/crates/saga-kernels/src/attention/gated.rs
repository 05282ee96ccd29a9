//! Gated key-value aggregation: the memory-naive summation over per-token
//! state matrices, and the decomposed path that folds the gates into the key
//! and value matrices instead.
//!
//! Both kernels report their peak transient workspace in scalar elements,
//! counting every buffer allocated beyond inputs and the final output. The
//! naive path must hold all `N` per-token state matrices and all `N` gate
//! matrices at once (it gates and accumulates inside that storage), so its
//! peak is exactly `2 * N * dk * dv`. The decomposed path holds only the
//! gated copies of `K` and `V` plus the aggregate state:
//! `N * (dk + dv) + dk * dv`.

use crate::attention::KVFeatureMap;
use crate::error::{KernelError, Result};
use crate::linalg::{matmul, matmul_tn, hadamard, outer_from_slices, Matrix};
use crate::scalar::Scalar;

/// Peak transient allocation of a kernel, in scalar elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkspaceCount {
    pub peak_elements: u64,
}

/// Tracks live transient elements and their high-water mark.
#[derive(Debug, Default)]
struct WorkspaceMeter {
    current: u64,
    peak: u64,
}

impl WorkspaceMeter {
    fn alloc(&mut self, elements: usize) {
        self.current += elements as u64;
        self.peak = self.peak.max(self.current);
    }

    fn free(&mut self, elements: usize) {
        self.current -= elements as u64;
    }

    fn count(&self) -> WorkspaceCount {
        WorkspaceCount {
            peak_elements: self.peak,
        }
    }
}

fn check_gated<T: Scalar>(
    op: &'static str,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
) -> Result<()> {
    if q.shape() != k.shape() {
        return Err(KernelError::DimMismatch {
            op,
            left: q.shape(),
            right: k.shape(),
        });
    }
    if k.rows() != v.rows() {
        return Err(KernelError::DimMismatch {
            op,
            left: k.shape(),
            right: v.shape(),
        });
    }
    if a.shape() != k.shape() {
        return Err(KernelError::DimMismatch {
            op,
            left: a.shape(),
            right: k.shape(),
        });
    }
    if b.shape() != v.shape() {
        return Err(KernelError::DimMismatch {
            op,
            left: b.shape(),
            right: v.shape(),
        });
    }
    for (name, gate) in [("key gate", a), ("value gate", b)] {
        if let Some(bad) = gate
            .data()
            .iter()
            .find(|&&g| !(g >= T::zero() && g <= T::one()))
        {
            return Err(KernelError::contract(
                op,
                format!("{} entry {} outside [0, 1]", name, bad),
            ));
        }
    }
    Ok(())
}

/// Reference gated aggregation: materializes every per-token state matrix
/// `k_i^T v_i` and every gate matrix `a_i^T b_i`, gates them elementwise,
/// and sums.
///
/// This is the oracle the decomposed path is checked against, and the
/// memory baseline: its reported workspace is exactly `2 * N * dk * dv`
/// elements.
pub fn gated_attention_naive<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
) -> Result<(Matrix<T>, KVFeatureMap<T>, WorkspaceCount)> {
    check_gated("gated_attention_naive", q, k, v, a, b)?;
    let n = k.rows();
    let state_elems = k.cols() * v.cols();
    let mut ws = WorkspaceMeter::default();

    let mut sfms: Vec<Matrix<T>> = Vec::with_capacity(n);
    for i in 0..n {
        sfms.push(outer_from_slices(k.row(i), v.row(i)));
        ws.alloc(state_elems);
    }
    let mut gates: Vec<Matrix<T>> = Vec::with_capacity(n);
    for i in 0..n {
        gates.push(outer_from_slices(a.row(i), b.row(i)));
        ws.alloc(state_elems);
    }

    // Gate and accumulate inside the SFM storage; no further allocation.
    for (sfm, gate) in sfms.iter_mut().zip(&gates) {
        sfm.hadamard_in_place(gate)?;
    }
    drop(gates);
    ws.free(n * state_elems);

    let mut iter = sfms.into_iter();
    let mut state = iter.next().expect("n >= 1 checked by shape validation");
    for sfm in iter {
        state.add_in_place(&sfm)?;
        ws.free(state_elems);
    }

    let out = matmul(q, &state)?;
    ws.free(state_elems); // state leaves the workspace as a returned value
    Ok((out, KVFeatureMap::new(state), ws.count()))
}

/// Decomposed gated aggregation `O = Q [(K o A)^T (V o B)]`.
///
/// Never materializes a per-token state or gate matrix; the transient
/// footprint is the two gated copies plus the aggregate state,
/// `N * (dk + dv) + dk * dv` elements. Output matches
/// [`gated_attention_naive`] to near machine precision.
pub fn gated_attention_decomposed<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
) -> Result<(Matrix<T>, KVFeatureMap<T>, WorkspaceCount)> {
    check_gated("gated_attention_decomposed", q, k, v, a, b)?;
    let mut ws = WorkspaceMeter::default();

    let k_gated = hadamard(k, a)?;
    ws.alloc(k_gated.len());
    let v_gated = hadamard(v, b)?;
    ws.alloc(v_gated.len());
    let state = matmul_tn(&k_gated, &v_gated)?;
    ws.alloc(state.len());

    let out = matmul(q, &state)?;
    ws.free(k_gated.len());
    ws.free(v_gated.len());
    drop(k_gated);
    drop(v_gated);
    ws.free(state.len());
    Ok((out, KVFeatureMap::new(state), ws.count()))
}
