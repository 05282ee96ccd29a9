use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    /// Operand shapes are incompatible. Both shapes are reported as
    /// `(rows, cols)`.
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A precondition other than a shape constraint was violated.
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// The Jacobi SVD sweep limit was exhausted. Carries a summary of the
    /// matrix conditioning (range of column norms) for diagnosis.
    #[error(
        "svd: no convergence after {sweeps} sweeps on {rows}x{cols} matrix \
         (column norms {min_norm:.3e}..{max_norm:.3e})"
    )]
    SvdNoConvergence {
        sweeps: usize,
        rows: usize,
        cols: usize,
        min_norm: f64,
        max_norm: f64,
    },

    /// A non-finite value was produced or supplied where finite values are
    /// required.
    #[error("{op}: non-finite value: {msg}")]
    NonFinite { op: &'static str, msg: String },
}

impl KernelError {
    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        KernelError::Contract {
            op,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KernelError>;
