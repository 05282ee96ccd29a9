//! Depthwise convolution over the token grid.

use crate::attention::AttnConfig;
use crate::error::{KernelError, Result};
use crate::linalg::{flops, Matrix};
use crate::parallel::for_each_row;
use crate::scalar::Scalar;

/// Per-channel `k x k` convolution of `v` reshaped to the config's
/// `grid_h x grid_w` grid, zero padding, stride 1, plus per-channel bias.
///
/// Every output element accumulates all `k * k` taps, reading zero where the
/// window leaves the grid, so the kernel executes exactly
/// `k^2 * n_tokens * model_dim` scalar multiplies.
pub fn dwc<T: Scalar>(
    v: &Matrix<T>,
    cfg: &AttnConfig,
    weights: &[Matrix<T>],
    bias: &Matrix<T>,
) -> Result<Matrix<T>> {
    let (gh, gw, d, k) = (cfg.grid_h, cfg.grid_w, cfg.model_dim, cfg.dwc_kernel);
    if v.shape() != (cfg.n_tokens, d) {
        return Err(KernelError::DimMismatch {
            op: "dwc",
            left: v.shape(),
            right: (cfg.n_tokens, d),
        });
    }
    if weights.len() != d || weights.iter().any(|w| w.shape() != (k, k)) {
        return Err(KernelError::contract(
            "dwc",
            format!("expected {} kernels of shape {}x{}", d, k, k),
        ));
    }
    if bias.shape() != (1, d) {
        return Err(KernelError::DimMismatch {
            op: "dwc",
            left: bias.shape(),
            right: (1, d),
        });
    }

    // Regroup the per-channel kernels tap-major: taps[ki*k + kj][c] is the
    // (ki, kj) weight of channel c, contiguous over channels for the inner
    // loop.
    let mut taps = vec![vec![T::zero(); d]; k * k];
    for (c, w) in weights.iter().enumerate() {
        for ki in 0..k {
            for kj in 0..k {
                taps[ki * k + kj][c] = w.get(ki, kj);
            }
        }
    }
    let zero_row = vec![T::zero(); d];
    let radius = (k / 2) as isize;

    let total_ops = k * k * cfg.n_tokens * d;
    flops::record_muls(total_ops as u64);
    let mut out = Matrix::zeros(cfg.n_tokens, d);
    for_each_row(out.data_mut(), d.max(1), total_ops, |t, out_row| {
        let y = (t / gw) as isize;
        let x = (t % gw) as isize;
        out_row.copy_from_slice(bias.row(0));
        for ki in 0..k {
            for kj in 0..k {
                let yy = y + ki as isize - radius;
                let xx = x + kj as isize - radius;
                let src: &[T] = if yy >= 0 && yy < gh as isize && xx >= 0 && xx < gw as isize {
                    v.row(yy as usize * gw + xx as usize)
                } else {
                    &zero_row
                };
                let wk = &taps[ki * k + kj];
                for ((o, &w), &s) in out_row.iter_mut().zip(wk).zip(src) {
                    *o = *o + w * s;
                }
            }
        }
    });
    Ok(out)
}
