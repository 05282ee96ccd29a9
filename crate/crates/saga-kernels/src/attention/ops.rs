//! Softmax attention and the two linear attention forms.

use crate::attention::{KVFeatureMap, Phi};
use crate::error::{KernelError, Result};
use crate::linalg::{flops, matmul, matmul_tn, softmax_slice, Matrix};
use crate::parallel::for_each_row;
use crate::scalar::Scalar;

/// Additive guard on the normalized-attention denominator. A query row whose
/// kernel image is zero produces a zero output row instead of dividing by
/// zero.
const EPS_GUARD: f64 = 1e-6;

fn check_qkv<T: Scalar>(
    op: &'static str,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<()> {
    if q.cols() != k.cols() || q.rows() != k.rows() {
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
    Ok(())
}

/// Softmax attention: row `t` of the output is the convex combination of the
/// rows of `v` weighted by `softmax(q_t K^T / scale)`.
///
/// Scores are computed one query row at a time, so the transient footprint is
/// one length-`N` score buffer per worker rather than an `N x N` matrix.
pub fn softmax_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    scale: T,
) -> Result<Matrix<T>> {
    check_qkv("softmax_attention", q, k, v)?;
    if !(scale > T::zero()) {
        return Err(KernelError::contract(
            "softmax_attention",
            format!("scale must be positive, got {}", scale),
        ));
    }
    let (n, dk, dv) = (q.rows(), q.cols(), v.cols());
    flops::record_muls((n * n * (dk + dv)) as u64);
    let mut out = Matrix::zeros(n, dv);
    for_each_row(
        out.data_mut(),
        dv.max(1),
        n * n * (dk + dv),
        |t, out_row| {
            let q_row = q.row(t);
            let mut scores = vec![T::zero(); n];
            for (i, s) in scores.iter_mut().enumerate() {
                *s = dot(q_row, k.row(i));
            }
            softmax_slice(&mut scores, scale);
            for (i, &w) in scores.iter().enumerate() {
                for (o, &vv) in out_row.iter_mut().zip(v.row(i)) {
                    *o = *o + w * vv;
                }
            }
        },
    );
    Ok(out)
}

/// Normalized linear attention with kernel `phi` applied elementwise to
/// queries and keys, evaluated in the reordered `q (K^T V)` form.
pub fn linear_attention_normalized<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    phi: Phi,
) -> Result<Matrix<T>> {
    check_qkv("linear_attention_normalized", q, k, v)?;
    let phi_q = phi.apply(q);
    let phi_k = phi.apply(k);
    let state = matmul_tn(&phi_k, v)?;
    // Column sums of phi(K): the denominator state.
    let mut key_mass = Matrix::zeros(phi_k.cols(), 1);
    for i in 0..phi_k.rows() {
        for (acc, &kv) in key_mass.data_mut().iter_mut().zip(phi_k.row(i)) {
            *acc = *acc + kv;
        }
    }
    let numer = matmul(&phi_q, &state)?;
    let denom = matmul(&phi_q, &key_mass)?;
    let eps = T::from_f64(EPS_GUARD);
    let mut out = numer;
    for t in 0..out.rows() {
        let z = denom.get(t, 0) + eps;
        for o in out.row_mut(t) {
            *o = *o / z;
        }
    }
    Ok(out)
}

/// Unnormalized linear attention `o_t = q_t S` with `S = K^T V`.
///
/// Returns the aggregated state alongside the output so callers can inspect
/// its rank.
pub fn linear_attention_unnormalized<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<(Matrix<T>, KVFeatureMap<T>)> {
    check_qkv("linear_attention_unnormalized", q, k, v)?;
    let state = matmul_tn(k, v)?;
    let out = matmul(q, &state)?;
    Ok((out, KVFeatureMap::new(state)))
}

/// Causal recurrence `S_t = S_{t-1} + k_t^T v_t`, `o_t = q_t S_t`.
///
/// Row `t` of the output depends only on tokens `i <= t`; after the last
/// token the running state equals the non-causal aggregate `K^T V`.
pub fn causal_recurrence<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_qkv("causal_recurrence", q, k, v)?;
    let (n, dk, dv) = (q.rows(), q.cols(), v.cols());
    flops::record_muls(2 * (n * dk * dv) as u64);
    let mut state = vec![T::zero(); dk * dv];
    let mut out = Matrix::zeros(n, dv);
    for t in 0..n {
        let k_row = k.row(t);
        let v_row = v.row(t);
        for (kk, &kv) in k_row.iter().enumerate() {
            let s_row = &mut state[kk * dv..(kk + 1) * dv];
            for (s, &vv) in s_row.iter_mut().zip(v_row) {
                *s = *s + kv * vv;
            }
        }
        let q_row = q.row(t);
        let out_row = out.row_mut(t);
        for (kk, &qv) in q_row.iter().enumerate() {
            let s_row = &state[kk * dv..(kk + 1) * dv];
            for (o, &sv) in out_row.iter_mut().zip(s_row) {
                *o = *o + qv * sv;
            }
        }
    }
    Ok(out)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
