//! Attention operators: softmax baseline, linear variants, the gated
//! key-value summation (naive oracle and decomposed fast path), depthwise
//! convolution, and the full gated attention block.

mod block;
mod conv;
mod gated;
mod ops;

pub use block::saga_block_forward;
pub use conv::dwc;
pub use gated::{gated_attention_decomposed, gated_attention_naive, WorkspaceCount};
pub use ops::{
    causal_recurrence, linear_attention_normalized, linear_attention_unnormalized,
    softmax_attention,
};

use crate::error::{KernelError, Result};
use crate::linalg::{random_matrix, InitScheme, Matrix, RngSeed};
use crate::scalar::Scalar;

/// Elementwise kernel applied to queries and keys in normalized linear
/// attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi {
    Identity,
    Relu,
}

impl Phi {
    /// Applies the kernel elementwise.
    pub fn apply<T: Scalar>(self, m: &Matrix<T>) -> Matrix<T> {
        match self {
            Phi::Identity => m.clone(),
            Phi::Relu => m.map(|v| v.max(T::zero())),
        }
    }
}

/// Shape configuration of one attention block.
///
/// `model_dim` splits evenly into `heads` heads of width
/// `key_dim == value_dim == model_dim / heads`, and the token sequence is a
/// flattened `grid_h x grid_w` image grid for the depthwise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnConfig {
    pub n_tokens: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dwc_kernel: usize,
    pub kernel_phi: Phi,
}

impl AttnConfig {
    pub fn new(
        n_tokens: usize,
        model_dim: usize,
        heads: usize,
        grid_h: usize,
        grid_w: usize,
        dwc_kernel: usize,
        kernel_phi: Phi,
    ) -> Result<Self> {
        if n_tokens == 0 || model_dim == 0 || heads == 0 {
            return Err(KernelError::contract(
                "attn_config",
                "n_tokens, model_dim and heads must all be at least 1",
            ));
        }
        if model_dim % heads != 0 {
            return Err(KernelError::contract(
                "attn_config",
                format!("model_dim {} not divisible by heads {}", model_dim, heads),
            ));
        }
        if grid_h * grid_w != n_tokens {
            return Err(KernelError::contract(
                "attn_config",
                format!(
                    "grid {}x{} does not cover {} tokens",
                    grid_h, grid_w, n_tokens
                ),
            ));
        }
        if dwc_kernel == 0 || dwc_kernel % 2 == 0 {
            return Err(KernelError::contract(
                "attn_config",
                format!("dwc kernel size {} must be odd and >= 1", dwc_kernel),
            ));
        }
        let head_dim = model_dim / heads;
        Ok(AttnConfig {
            n_tokens,
            model_dim,
            heads,
            key_dim: head_dim,
            value_dim: head_dim,
            grid_h,
            grid_w,
            dwc_kernel,
            kernel_phi,
        })
    }

    /// Convenience constructor that factors `n_tokens` into the most square
    /// grid available.
    pub fn with_auto_grid(
        n_tokens: usize,
        model_dim: usize,
        heads: usize,
        dwc_kernel: usize,
        kernel_phi: Phi,
    ) -> Result<Self> {
        let (gh, gw) = auto_grid(n_tokens);
        Self::new(n_tokens, model_dim, heads, gh, gw, dwc_kernel, kernel_phi)
    }
}

/// Most square factorization `(gh, gw)` with `gh * gw == n`.
pub fn auto_grid(n: usize) -> (usize, usize) {
    let mut gh = (n as f64).sqrt() as usize;
    while gh > 1 && n % gh != 0 {
        gh -= 1;
    }
    (gh.max(1), n / gh.max(1))
}

/// Projection weights of one block: query/key/value, the two state gates,
/// the output gate, the output projection, and the depthwise convolution
/// kernel with its per-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SagaParams<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub w_a: Matrix<T>,
    pub w_b: Matrix<T>,
    pub w_g: Matrix<T>,
    pub w_out: Matrix<T>,
    /// One `k x k` kernel per channel, `model_dim` in total.
    pub dwc_weights: Vec<Matrix<T>>,
    /// Per-channel bias as a `1 x model_dim` row.
    pub dwc_bias: Matrix<T>,
}

impl<T: Scalar> SagaParams<T> {
    /// Fan-scaled uniform initialization of every weight, deterministic in
    /// the seed.
    pub fn random(cfg: &AttnConfig, seed: RngSeed) -> Result<Self> {
        let d = cfg.model_dim;
        let k = cfg.dwc_kernel;
        let proj = |label: &str| random_matrix::<T>(d, d, seed.stream(label), InitScheme::Uniform);
        let dwc_weights = (0..d)
            .map(|c| random_matrix::<T>(k, k, seed.stream("dwc").child(c as u64), InitScheme::Uniform))
            .collect::<Result<Vec<_>>>()?;
        Ok(SagaParams {
            w_q: proj("w_q")?,
            w_k: proj("w_k")?,
            w_v: proj("w_v")?,
            w_a: proj("w_a")?,
            w_b: proj("w_b")?,
            w_g: proj("w_g")?,
            w_out: proj("w_out")?,
            dwc_weights,
            dwc_bias: random_matrix::<T>(1, d, seed.stream("dwc_bias"), InitScheme::Uniform)?,
        })
    }

    pub fn validate(&self, cfg: &AttnConfig) -> Result<()> {
        let d = cfg.model_dim;
        let k = cfg.dwc_kernel;
        for (name, w) in [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_a", &self.w_a),
            ("w_b", &self.w_b),
            ("w_g", &self.w_g),
            ("w_out", &self.w_out),
        ] {
            if w.shape() != (d, d) {
                return Err(KernelError::contract(
                    "saga_params",
                    format!("{} has shape {:?}, expected ({}, {})", name, w.shape(), d, d),
                ));
            }
        }
        if self.dwc_weights.len() != d {
            return Err(KernelError::contract(
                "saga_params",
                format!("{} dwc kernels, expected {}", self.dwc_weights.len(), d),
            ));
        }
        if let Some(w) = self.dwc_weights.iter().find(|w| w.shape() != (k, k)) {
            return Err(KernelError::contract(
                "saga_params",
                format!("dwc kernel has shape {:?}, expected ({}, {})", w.shape(), k, k),
            ));
        }
        if self.dwc_bias.shape() != (1, d) {
            return Err(KernelError::contract(
                "saga_params",
                format!("dwc bias has shape {:?}, expected (1, {})", self.dwc_bias.shape(), d),
            ));
        }
        Ok(())
    }
}

/// The aggregated key-value state: a `key_dim x value_dim` matrix whose size
/// is independent of the token count.
#[derive(Debug, Clone, PartialEq)]
pub struct KVFeatureMap<T> {
    pub state: Matrix<T>,
}

impl<T: Scalar> KVFeatureMap<T> {
    pub fn new(state: Matrix<T>) -> Self {
        KVFeatureMap { state }
    }
}

/// Splits columns into `heads` contiguous blocks of equal width.
pub fn multi_head_split<T: Scalar>(m: &Matrix<T>, heads: usize) -> Result<Vec<Matrix<T>>> {
    if heads == 0 || m.cols() % heads != 0 {
        return Err(KernelError::contract(
            "multi_head_split",
            format!("{} columns not divisible into {} heads", m.cols(), heads),
        ));
    }
    let width = m.cols() / heads;
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut data = Vec::with_capacity(m.rows() * width);
        for r in 0..m.rows() {
            let row = m.row(r);
            data.extend_from_slice(&row[h * width..(h + 1) * width]);
        }
        out.push(Matrix::from_vec(m.rows(), width, data)?);
    }
    Ok(out)
}

/// Exact inverse of [`multi_head_split`]: concatenates equal-shape blocks
/// back into full-width columns.
pub fn multi_head_merge<T: Scalar>(heads: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = heads.first().ok_or_else(|| {
        KernelError::contract("multi_head_merge", "head list must be nonempty")
    })?;
    if let Some(bad) = heads.iter().find(|h| h.shape() != first.shape()) {
        return Err(KernelError::DimMismatch {
            op: "multi_head_merge",
            left: first.shape(),
            right: bad.shape(),
        });
    }
    let rows = first.rows();
    let width = first.cols();
    let mut data = Vec::with_capacity(rows * width * heads.len());
    for r in 0..rows {
        for head in heads {
            data.extend_from_slice(head.row(r));
        }
    }
    Matrix::from_vec(rows, width * heads.len(), data)
}
