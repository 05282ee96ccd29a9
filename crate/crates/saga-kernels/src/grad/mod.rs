//! Hand-derived backward passes for the gated attention kernels, plus the
//! central-difference checker used to verify them.
//!
//! There is no autodiff tape: the crate needs exactly two backward paths
//! (the decomposed gated kernel and the full block), and deriving them by
//! hand is itself part of verifying that the block is trainable. Gradients
//! are of the scalar surrogate `<d_out, output>`, so every gradient is
//! linear in `d_out`.

use crate::attention::{
    dwc, multi_head_merge, multi_head_split, saga_block_forward, AttnConfig, SagaParams,
};
use crate::error::{KernelError, Result};
use crate::linalg::{hadamard, matmul, matmul_nt, matmul_tn, sigmoid_map, Matrix};
use crate::scalar::Scalar;

/// Gradients of the decomposed gated kernel with respect to its five inputs.
#[derive(Debug, Clone)]
pub struct GatedGrads<T> {
    pub d_q: Matrix<T>,
    pub d_k: Matrix<T>,
    pub d_v: Matrix<T>,
    pub d_a: Matrix<T>,
    pub d_b: Matrix<T>,
}

/// Gradients of the full block with respect to the input and every
/// parameter.
#[derive(Debug, Clone)]
pub struct SagaGrads<T> {
    pub d_x: Matrix<T>,
    pub d_w_q: Matrix<T>,
    pub d_w_k: Matrix<T>,
    pub d_w_v: Matrix<T>,
    pub d_w_a: Matrix<T>,
    pub d_w_b: Matrix<T>,
    pub d_w_g: Matrix<T>,
    pub d_w_out: Matrix<T>,
    pub d_dwc_weights: Vec<Matrix<T>>,
    pub d_dwc_bias: Matrix<T>,
}

/// Backward of `O = Q [(K o A)^T (V o B)]` under the surrogate
/// `<d_out, O>`.
///
/// With `M = (K o A)^T (V o B)` the chain is `dQ = dO M^T`, `dM = Q^T dO`,
/// `dV~ = K~ dM`, `dK~ = V~ dM^T`, and the Hadamard factors distribute the
/// gated gradients onto their two factors.
pub fn backward_gated_decomposed<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    d_out: &Matrix<T>,
) -> Result<GatedGrads<T>> {
    if d_out.shape() != (q.rows(), v.cols()) {
        return Err(KernelError::DimMismatch {
            op: "backward_gated_decomposed",
            left: d_out.shape(),
            right: (q.rows(), v.cols()),
        });
    }
    let k_gated = hadamard(k, a)?;
    let v_gated = hadamard(v, b)?;
    let state = matmul_tn(&k_gated, &v_gated)?;

    let d_q = matmul_nt(d_out, &state)?;
    let d_state = matmul_tn(q, d_out)?;
    let d_v_gated = matmul(&k_gated, &d_state)?;
    let d_k_gated = matmul_nt(&v_gated, &d_state)?;

    Ok(GatedGrads {
        d_q,
        d_k: hadamard(&d_k_gated, a)?,
        d_a: hadamard(&d_k_gated, k)?,
        d_v: hadamard(&d_v_gated, b)?,
        d_b: hadamard(&d_v_gated, v)?,
    })
}

/// Backward of the depthwise convolution: gradients for the input, the
/// per-channel kernels, and the bias.
fn backward_dwc<T: Scalar>(
    d_out: &Matrix<T>,
    v: &Matrix<T>,
    cfg: &AttnConfig,
    weights: &[Matrix<T>],
) -> Result<(Matrix<T>, Vec<Matrix<T>>, Matrix<T>)> {
    let (gh, gw, d, k) = (cfg.grid_h, cfg.grid_w, cfg.model_dim, cfg.dwc_kernel);
    let r = (k / 2) as isize;

    let mut d_bias = Matrix::zeros(1, d);
    for t in 0..cfg.n_tokens {
        for (acc, &g) in d_bias.data_mut().iter_mut().zip(d_out.row(t)) {
            *acc = *acc + g;
        }
    }

    let mut d_weights = vec![Matrix::zeros(k, k); d];
    let mut d_v = Matrix::zeros(cfg.n_tokens, d);
    for y in 0..gh as isize {
        for x in 0..gw as isize {
            let t = (y * gw as isize + x) as usize;
            let g_row = d_out.row(t);
            for ki in 0..k {
                for kj in 0..k {
                    let (sy, sx) = (y + ki as isize - r, x + kj as isize - r);
                    if sy < 0 || sy >= gh as isize || sx < 0 || sx >= gw as isize {
                        continue;
                    }
                    let s = (sy * gw as isize + sx) as usize;
                    let v_row = v.row(s);
                    for c in 0..d {
                        let dw = d_weights[c].get(ki, kj) + g_row[c] * v_row[c];
                        d_weights[c].set(ki, kj, dw);
                    }
                    let d_v_row = d_v.row_mut(s);
                    for c in 0..d {
                        d_v_row[c] = d_v_row[c] + weights[c].get(ki, kj) * g_row[c];
                    }
                }
            }
        }
    }
    Ok((d_v, d_weights, d_bias))
}

/// Backward of the full block under the surrogate `<d_out, O>`.
///
/// Recomputes the forward activations (no tape is kept) and chains through
/// the output projection, the output gate, the depthwise convolution, the
/// per-head gated kernels, and the logistic gate generation
/// (`dW_A = X^T (dA o A o (1 - A))`, likewise for `B`).
pub fn backward_saga_block<T: Scalar>(
    x: &Matrix<T>,
    params: &SagaParams<T>,
    cfg: &AttnConfig,
    d_out: &Matrix<T>,
) -> Result<SagaGrads<T>> {
    params.validate(cfg)?;
    if d_out.shape() != (cfg.n_tokens, cfg.model_dim) {
        return Err(KernelError::DimMismatch {
            op: "backward_saga_block",
            left: d_out.shape(),
            right: (cfg.n_tokens, cfg.model_dim),
        });
    }

    // Forward recomputation.
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

    let mut k_gated_h = Vec::with_capacity(heads);
    let mut v_gated_h = Vec::with_capacity(heads);
    let mut state_h = Vec::with_capacity(heads);
    let mut attn_h = Vec::with_capacity(heads);
    for h in 0..heads {
        let kg = hadamard(&k_h[h], &a_h[h])?;
        let vg = hadamard(&v_h[h], &b_h[h])?;
        let st = matmul_tn(&kg, &vg)?;
        attn_h.push(matmul(&q_h[h], &st)?);
        k_gated_h.push(kg);
        v_gated_h.push(vg);
        state_h.push(st);
    }
    let attn = multi_head_merge(&attn_h)?;
    let local = dwc(&v, cfg, &params.dwc_weights, &params.dwc_bias)?;
    let pre_gate = attn.add(&local)?;
    let gated = hadamard(&pre_gate, &out_gate)?;

    // Output projection and gate.
    let d_gated = matmul_nt(d_out, &params.w_out)?;
    let d_w_out = matmul_tn(&gated, d_out)?;
    let d_pre_gate = hadamard(&d_gated, &out_gate)?;
    let d_out_gate = hadamard(&d_gated, &pre_gate)?;

    // Convolution branch (d_pre_gate flows into both the attention branch
    // and the convolution residual).
    let (d_v_conv, d_dwc_weights, d_dwc_bias) =
        backward_dwc(&d_pre_gate, &v, cfg, &params.dwc_weights)?;

    // Attention branch, per head.
    let d_attn_h = multi_head_split(&d_pre_gate, heads)?;
    let mut d_q_h = Vec::with_capacity(heads);
    let mut d_k_h = Vec::with_capacity(heads);
    let mut d_v_h = Vec::with_capacity(heads);
    let mut d_a_h = Vec::with_capacity(heads);
    let mut d_b_h = Vec::with_capacity(heads);
    for h in 0..heads {
        let d_y = &d_attn_h[h];
        d_q_h.push(matmul_nt(d_y, &state_h[h])?);
        let d_state = matmul_tn(&q_h[h], d_y)?;
        let d_v_gated = matmul(&k_gated_h[h], &d_state)?;
        let d_k_gated = matmul_nt(&v_gated_h[h], &d_state)?;
        d_k_h.push(hadamard(&d_k_gated, &a_h[h])?);
        d_a_h.push(hadamard(&d_k_gated, &k_h[h])?);
        d_v_h.push(hadamard(&d_v_gated, &b_h[h])?);
        d_b_h.push(hadamard(&d_v_gated, &v_h[h])?);
    }
    let d_q = multi_head_merge(&d_q_h)?;
    let d_k = multi_head_merge(&d_k_h)?;
    let mut d_v = multi_head_merge(&d_v_h)?;
    d_v.add_in_place(&d_v_conv)?;
    let d_a = multi_head_merge(&d_a_h)?;
    let d_b = multi_head_merge(&d_b_h)?;

    // Logistic chain for the gate projections.
    let one = Matrix::ones(cfg.n_tokens, cfg.model_dim);
    let d_a_pre = hadamard(&hadamard(&d_a, &key_gate)?, &one.add(&key_gate.scale(-T::one()))?)?;
    let d_b_pre = hadamard(
        &hadamard(&d_b, &value_gate)?,
        &one.add(&value_gate.scale(-T::one()))?,
    )?;

    // Projection weights and the input.
    let d_w_q = matmul_tn(x, &d_q)?;
    let d_w_k = matmul_tn(x, &d_k)?;
    let d_w_v = matmul_tn(x, &d_v)?;
    let d_w_g = matmul_tn(x, &d_out_gate)?;
    let d_w_a = matmul_tn(x, &d_a_pre)?;
    let d_w_b = matmul_tn(x, &d_b_pre)?;

    let mut d_x = matmul_nt(&d_q, &params.w_q)?;
    d_x.add_in_place(&matmul_nt(&d_k, &params.w_k)?)?;
    d_x.add_in_place(&matmul_nt(&d_v, &params.w_v)?)?;
    d_x.add_in_place(&matmul_nt(&d_out_gate, &params.w_g)?)?;
    d_x.add_in_place(&matmul_nt(&d_a_pre, &params.w_a)?)?;
    d_x.add_in_place(&matmul_nt(&d_b_pre, &params.w_b)?)?;

    Ok(SagaGrads {
        d_x,
        d_w_q,
        d_w_k,
        d_w_v,
        d_w_a,
        d_w_b,
        d_w_g,
        d_w_out,
        d_dwc_weights,
        d_dwc_bias,
    })
}

/// Central-difference check of an analytic gradient.
///
/// Perturbs every coordinate of `point` by `+/-step`, evaluates
/// `(f(x + h e) - f(x - h e)) / 2h`, and returns the maximum over
/// coordinates of `|fd - analytic| / max(|fd|, |analytic|, 1e-8)`.
pub fn finite_diff_check<T: Scalar>(
    f: &mut dyn FnMut(&Matrix<T>) -> Result<T>,
    point: &Matrix<T>,
    analytic: &Matrix<T>,
    step: T,
) -> Result<T> {
    if !(step > T::zero()) {
        return Err(KernelError::contract(
            "finite_diff_check",
            format!("step must be positive, got {}", step),
        ));
    }
    if point.shape() != analytic.shape() {
        return Err(KernelError::DimMismatch {
            op: "finite_diff_check",
            left: point.shape(),
            right: analytic.shape(),
        });
    }
    let floor = T::from_f64(1e-8);
    let two = T::one() + T::one();
    let mut worst = T::zero();
    let mut probe = point.clone();
    for r in 0..point.rows() {
        for c in 0..point.cols() {
            let base = point.get(r, c);
            probe.set(r, c, base + step);
            let up = f(&probe)?;
            probe.set(r, c, base - step);
            let down = f(&probe)?;
            probe.set(r, c, base);
            if !up.is_finite() || !down.is_finite() {
                return Err(KernelError::NonFinite {
                    op: "finite_diff_check",
                    msg: format!("objective at perturbed coordinate ({}, {})", r, c),
                });
            }
            let fd = (up - down) / (two * step);
            let g = analytic.get(r, c);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Frobenius inner product, the scalar surrogate used by every gradcheck.
pub fn surrogate_loss<T: Scalar>(d_out: &Matrix<T>, out: &Matrix<T>) -> Result<T> {
    let weighted = hadamard(d_out, out)?;
    Ok(weighted.data().iter().copied().sum())
}

/// Convenience: surrogate loss of the block forward at `x`.
pub fn block_loss<T: Scalar>(
    x: &Matrix<T>,
    params: &SagaParams<T>,
    cfg: &AttnConfig,
    d_out: &Matrix<T>,
) -> Result<T> {
    let (out, _) = saga_block_forward(x, params, cfg)?;
    surrogate_loss(d_out, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{gated_attention_decomposed, gated_attention_naive, Phi};
    use crate::linalg::{random_matrix, InitScheme, RngSeed};

    fn rand_m(rows: usize, cols: usize, seed: u64, label: &str) -> Matrix<f64> {
        random_matrix(
            rows,
            cols,
            RngSeed(seed).stream(label),
            InitScheme::Normal { scale: 1.0 },
        )
        .unwrap()
    }

    fn rand_gate(rows: usize, cols: usize, seed: u64, label: &str) -> Matrix<f64> {
        sigmoid_map(&rand_m(rows, cols, seed, label))
    }

    const STEP: f64 = 1e-5;

    #[test]
    fn quadratic_objective_passes_tightly() {
        let x = rand_m(3, 4, 1, "x");
        let grad = x.scale(2.0);
        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| Ok(m.data().iter().map(|v| v * v).sum()),
            &x,
            &grad,
            STEP,
        )
        .unwrap();
        assert!(err <= 1e-8, "relative error {err}");
    }

    #[test]
    fn sigmoid_objective_matches_closed_form() {
        let x = rand_m(3, 3, 2, "x");
        let sig = sigmoid_map(&x);
        let grad = sig.map(|s| s * (1.0 - s));
        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| Ok(sigmoid_map(m).data().iter().sum()),
            &x,
            &grad,
            STEP,
        )
        .unwrap();
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn detector_flags_wrong_gradient() {
        let x = rand_m(2, 3, 3, "x");
        let wrong = x.scale(4.0); // true gradient is 2x
        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| Ok(m.data().iter().map(|v| v * v).sum()),
            &x,
            &wrong,
            STEP,
        )
        .unwrap();
        assert!(err >= 0.4, "wrong gradient masked, error {err}");
    }

    #[test]
    fn zero_upstream_zeroes_every_gradient() {
        let (n, dk, dv) = (5, 3, 4);
        let q = rand_m(n, dk, 4, "q");
        let k = rand_m(n, dk, 4, "k");
        let v = rand_m(n, dv, 4, "v");
        let a = rand_gate(n, dk, 4, "a");
        let b = rand_gate(n, dv, 4, "b");
        let grads =
            backward_gated_decomposed(&q, &k, &v, &a, &b, &Matrix::zeros(n, dv)).unwrap();
        for g in [&grads.d_q, &grads.d_k, &grads.d_v, &grads.d_a, &grads.d_b] {
            assert_eq!(g.max_abs(), 0.0);
        }
    }

    #[test]
    fn ones_gates_match_ungated_backward() {
        let (n, dk, dv) = (6, 3, 4);
        let q = rand_m(n, dk, 5, "q");
        let k = rand_m(n, dk, 5, "k");
        let v = rand_m(n, dv, 5, "v");
        let ones_a = Matrix::ones(n, dk);
        let ones_b = Matrix::ones(n, dv);
        let d_out = rand_m(n, dv, 5, "dout");
        let grads = backward_gated_decomposed(&q, &k, &v, &ones_a, &ones_b, &d_out).unwrap();

        // Ungated chain: O = Q S with S = K^T V.
        let state = matmul_tn(&k, &v).unwrap();
        let d_q = matmul_nt(&d_out, &state).unwrap();
        let d_state = matmul_tn(&q, &d_out).unwrap();
        let d_v = matmul(&k, &d_state).unwrap();
        let d_k = matmul_nt(&v, &d_state).unwrap();

        assert_eq!(grads.d_q, d_q);
        assert_eq!(grads.d_k, d_k);
        assert_eq!(grads.d_v, d_v);
    }

    #[test]
    fn gated_backward_passes_finite_differences() {
        let (n, dk, dv) = (6, 4, 4);
        for seed in 0..5u64 {
            let q = rand_m(n, dk, seed, "q");
            let k = rand_m(n, dk, seed, "k");
            let v = rand_m(n, dv, seed, "v");
            let a = rand_gate(n, dk, seed, "a");
            let b = rand_gate(n, dv, seed, "b");
            let d_out = rand_m(n, dv, seed, "dout");
            let grads = backward_gated_decomposed(&q, &k, &v, &a, &b, &d_out).unwrap();

            let check = |point: &Matrix<f64>,
                             analytic: &Matrix<f64>,
                             replace: &dyn Fn(&Matrix<f64>) -> (Matrix<f64>, Matrix<f64>, Matrix<f64>, Matrix<f64>, Matrix<f64>)| {
                let err = finite_diff_check(
                    &mut |m: &Matrix<f64>| {
                        let (q2, k2, v2, a2, b2) = replace(m);
                        let (out, _, _) =
                            gated_attention_decomposed(&q2, &k2, &v2, &a2, &b2)?;
                        surrogate_loss(&d_out, &out)
                    },
                    point,
                    analytic,
                    STEP,
                )
                .unwrap();
                assert!(err <= 1e-5, "relative error {err}");
            };

            let ctx = (q.clone(), k.clone(), v.clone(), a.clone(), b.clone());
            check(&q, &grads.d_q, &|m| {
                (m.clone(), ctx.1.clone(), ctx.2.clone(), ctx.3.clone(), ctx.4.clone())
            });
            check(&k, &grads.d_k, &|m| {
                (ctx.0.clone(), m.clone(), ctx.2.clone(), ctx.3.clone(), ctx.4.clone())
            });
            check(&v, &grads.d_v, &|m| {
                (ctx.0.clone(), ctx.1.clone(), m.clone(), ctx.3.clone(), ctx.4.clone())
            });
            check(&a, &grads.d_a, &|m| {
                (ctx.0.clone(), ctx.1.clone(), ctx.2.clone(), m.clone(), ctx.4.clone())
            });
            check(&b, &grads.d_b, &|m| {
                (ctx.0.clone(), ctx.1.clone(), ctx.2.clone(), ctx.3.clone(), m.clone())
            });
        }
    }

    #[test]
    fn decomposed_backward_agrees_with_naive_path_finite_differences() {
        // The factorization identity holds for gradients, not only primals:
        // finite differences through the naive summation must reproduce the
        // analytic backward of the decomposed path.
        let (n, dk, dv) = (4, 3, 3);
        let q = rand_m(n, dk, 11, "q");
        let k = rand_m(n, dk, 11, "k");
        let v = rand_m(n, dv, 11, "v");
        let a = rand_gate(n, dk, 11, "a");
        let b = rand_gate(n, dv, 11, "b");
        let d_out = rand_m(n, dv, 11, "dout");
        let grads = backward_gated_decomposed(&q, &k, &v, &a, &b, &d_out).unwrap();

        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| {
                let (out, _, _) = gated_attention_naive(m, &k, &v, &a, &b)?;
                surrogate_loss(&d_out, &out)
            },
            &q,
            &grads.d_q,
            STEP,
        )
        .unwrap();
        assert!(err <= 1e-4, "naive-path gradient mismatch {err}");

        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| {
                let (out, _, _) = gated_attention_naive(&q, &k, &v, m, &b)?;
                surrogate_loss(&d_out, &out)
            },
            &a,
            &grads.d_a,
            STEP,
        )
        .unwrap();
        assert!(err <= 1e-4, "naive-path gate gradient mismatch {err}");
    }

    fn tiny_cfg() -> AttnConfig {
        AttnConfig::new(8, 4, 2, 2, 4, 3, Phi::Relu).unwrap()
    }

    #[test]
    fn block_backward_passes_finite_differences() {
        let cfg = tiny_cfg();
        let params = SagaParams::<f64>::random(&cfg, RngSeed(21)).unwrap();
        let x = rand_m(cfg.n_tokens, cfg.model_dim, 21, "x");
        let d_out = rand_m(cfg.n_tokens, cfg.model_dim, 21, "dout");
        let grads = backward_saga_block(&x, &params, &cfg, &d_out).unwrap();

        let err = finite_diff_check(
            &mut |m: &Matrix<f64>| block_loss(m, &params, &cfg, &d_out),
            &x,
            &grads.d_x,
            STEP,
        )
        .unwrap();
        assert!(err <= 1e-4, "input gradient error {err}");

        let weight_cases: Vec<(&Matrix<f64>, &Matrix<f64>, Box<dyn Fn(&mut SagaParams<f64>, Matrix<f64>)>)> = vec![
            (&params.w_q, &grads.d_w_q, Box::new(|p, m| p.w_q = m)),
            (&params.w_k, &grads.d_w_k, Box::new(|p, m| p.w_k = m)),
            (&params.w_v, &grads.d_w_v, Box::new(|p, m| p.w_v = m)),
            (&params.w_a, &grads.d_w_a, Box::new(|p, m| p.w_a = m)),
            (&params.w_b, &grads.d_w_b, Box::new(|p, m| p.w_b = m)),
            (&params.w_g, &grads.d_w_g, Box::new(|p, m| p.w_g = m)),
            (&params.w_out, &grads.d_w_out, Box::new(|p, m| p.w_out = m)),
            (
                &params.dwc_bias,
                &grads.d_dwc_bias,
                Box::new(|p, m| p.dwc_bias = m),
            ),
        ];
        for (point, analytic, install) in weight_cases {
            let err = finite_diff_check(
                &mut |m: &Matrix<f64>| {
                    let mut p2 = params.clone();
                    install(&mut p2, m.clone());
                    block_loss(&x, &p2, &cfg, &d_out)
                },
                point,
                analytic,
                STEP,
            )
            .unwrap();
            assert!(err <= 1e-4, "parameter gradient error {err}");
        }

        for c in 0..cfg.model_dim {
            let err = finite_diff_check(
                &mut |m: &Matrix<f64>| {
                    let mut p2 = params.clone();
                    p2.dwc_weights[c] = m.clone();
                    block_loss(&x, &p2, &cfg, &d_out)
                },
                &params.dwc_weights[c],
                &grads.d_dwc_weights[c],
                STEP,
            )
            .unwrap();
            assert!(err <= 1e-4, "dwc kernel {c} gradient error {err}");
        }
    }

    #[test]
    fn zero_conv_kernel_still_receives_gradient() {
        let cfg = tiny_cfg();
        let mut params = SagaParams::<f64>::random(&cfg, RngSeed(30)).unwrap();
        for w in &mut params.dwc_weights {
            *w = Matrix::zeros(cfg.dwc_kernel, cfg.dwc_kernel);
        }
        let x = rand_m(cfg.n_tokens, cfg.model_dim, 30, "x");
        let d_out = rand_m(cfg.n_tokens, cfg.model_dim, 30, "dout");
        let grads = backward_saga_block(&x, &params, &cfg, &d_out).unwrap();
        let total: f64 = grads
            .d_dwc_weights
            .iter()
            .map(|w| w.max_abs())
            .fold(0.0, f64::max);
        assert!(total > 1e-8, "gradient did not flow into disabled branch");
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let cfg = tiny_cfg();
        let params = SagaParams::<f64>::random(&cfg, RngSeed(31)).unwrap();
        let x = rand_m(cfg.n_tokens, cfg.model_dim, 31, "x");
        let d_out = rand_m(cfg.n_tokens, cfg.model_dim, 31, "dout");
        let base = backward_saga_block(&x, &params, &cfg, &d_out).unwrap();
        let scaled = backward_saga_block(&x, &params, &cfg, &d_out.scale(2.0)).unwrap();
        assert_eq!(base.d_x.scale(2.0), scaled.d_x);
        assert_eq!(base.d_w_out.scale(2.0), scaled.d_w_out);
        assert_eq!(base.d_dwc_bias.scale(2.0), scaled.d_dwc_bias);
    }

    #[test]
    fn gradient_shapes_equal_primal_shapes() {
        let cfg = tiny_cfg();
        let params = SagaParams::<f64>::random(&cfg, RngSeed(32)).unwrap();
        let x = rand_m(cfg.n_tokens, cfg.model_dim, 32, "x");
        let d_out = rand_m(cfg.n_tokens, cfg.model_dim, 32, "dout");
        let grads = backward_saga_block(&x, &params, &cfg, &d_out).unwrap();
        assert_eq!(grads.d_x.shape(), x.shape());
        assert_eq!(grads.d_w_q.shape(), params.w_q.shape());
        assert_eq!(grads.d_w_out.shape(), params.w_out.shape());
        assert_eq!(grads.d_dwc_bias.shape(), params.dwc_bias.shape());
        assert_eq!(grads.d_dwc_weights.len(), params.dwc_weights.len());
        for (g, p) in grads.d_dwc_weights.iter().zip(&params.dwc_weights) {
            assert_eq!(g.shape(), p.shape());
        }
    }
}
