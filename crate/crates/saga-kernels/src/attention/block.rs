//! The full gated attention block.

use crate::attention::{
    dwc, gated_attention_decomposed, multi_head_merge, multi_head_split, AttnConfig, KVFeatureMap,
    SagaParams,
};
use crate::error::Result;
use crate::linalg::{hadamard, matmul, sigmoid_map, Matrix};
use crate::scalar::Scalar;

/// Forward pass of one block.
///
/// From the input `x` it projects queries, keys, values and the output gate
/// (`x W_g`, no activation), generates the key/value gates through the
/// logistic map, runs the decomposed gated kernel per head, concatenates the
/// heads, adds the depthwise convolution of the value projection, multiplies
/// elementwise by the output gate, and applies the output projection.
///
/// Returns the block output together with each head's gated state
/// `(K o A)^T (V o B)` for rank analysis.
pub fn saga_block_forward<T: Scalar>(
    x: &Matrix<T>,
    params: &SagaParams<T>,
    cfg: &AttnConfig,
) -> Result<(Matrix<T>, Vec<KVFeatureMap<T>>)> {
    params.validate(cfg)?;
    if x.shape() != (cfg.n_tokens, cfg.model_dim) {
        return Err(crate::error::KernelError::DimMismatch {
            op: "saga_block_forward",
            left: x.shape(),
            right: (cfg.n_tokens, cfg.model_dim),
        });
    }

    let q = matmul(x, &params.w_q)?;
    let k = matmul(x, &params.w_k)?;
    let v = matmul(x, &params.w_v)?;
    let out_gate = matmul(x, &params.w_g)?;
    let key_gate = sigmoid_map(&matmul(x, &params.w_a)?);
    let value_gate = sigmoid_map(&matmul(x, &params.w_b)?);

    let heads = cfg.heads;
    let q_h = multi_head_split(&q, heads)?;
    let k_h = multi_head_split(&k, heads)?;
    let v_h = multi_head_split(&v, heads)?;
    let a_h = multi_head_split(&key_gate, heads)?;
    let b_h = multi_head_split(&value_gate, heads)?;

    let mut head_outputs = Vec::with_capacity(heads);
    let mut head_states = Vec::with_capacity(heads);
    for h in 0..heads {
        let (o, state, _) =
            gated_attention_decomposed(&q_h[h], &k_h[h], &v_h[h], &a_h[h], &b_h[h])?;
        head_outputs.push(o);
        head_states.push(state);
    }
    let attn = multi_head_merge(&head_outputs)?;

    let local = dwc(&v, cfg, &params.dwc_weights, &params.dwc_bias)?;
    let gated = hadamard(&attn.add(&local)?, &out_gate)?;
    let out = matmul(&gated, &params.w_out)?;
    Ok((out, head_states))
}
