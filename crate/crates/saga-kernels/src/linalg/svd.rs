//! Singular values by one-sided Jacobi, and the numerical rank built on them.
//!
//! One-sided Jacobi orthogonalizes the columns of the matrix with plane
//! rotations until every pair is numerically orthogonal; the singular values
//! are then the column norms. For the small state matrices analyzed here
//! (at most a few hundred per side) it converges in a handful of sweeps and
//! is accurate to machine precision.

use crate::error::{KernelError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 60;

/// Singular values in descending order.
pub fn singular_values<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>> {
    if m.is_empty() {
        return Err(KernelError::contract(
            "singular_values",
            "matrix must be nonempty",
        ));
    }
    // Work on the tall orientation; singular values are transpose-invariant.
    // Columns are stored contiguously (as rows of the transposed buffer) so
    // rotations touch linear memory.
    let work = if m.rows() >= m.cols() {
        m.transpose()
    } else {
        m.clone()
    };
    let n = work.rows(); // number of columns being orthogonalized
    let len = work.cols(); // length of each column
    let mut cols: Vec<Vec<T>> = (0..n).map(|i| work.row(i).to_vec()).collect();

    let tol = T::epsilon();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut app, mut aqq, mut apq) = (T::zero(), T::zero(), T::zero());
                for i in 0..len {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    app = app + x * x;
                    aqq = aqq + y * y;
                    apq = apq + x * y;
                }
                if app == T::zero() || aqq == T::zero() {
                    continue;
                }
                if apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let tau = (aqq - app) / (two * apq);
                let t = {
                    let root = (T::one() + tau * tau).sqrt();
                    if tau >= T::zero() {
                        T::one() / (tau + root)
                    } else {
                        T::one() / (tau - root)
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..len {
                    let (x, y) = (cp[i], cq[i]);
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }

    let mut sigma: Vec<T> = cols
        .iter()
        .map(|col| {
            col.iter()
                .map(|&v| v * v)
                .fold(T::zero(), |a, b| a + b)
                .sqrt()
        })
        .collect();

    if !converged {
        let max_norm = sigma.iter().fold(T::zero(), |a, &b| a.max(b)).to_f64();
        let min_norm = sigma
            .iter()
            .fold(T::infinity(), |a, &b| a.min(b))
            .to_f64();
        return Err(KernelError::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            rows: m.rows(),
            cols: m.cols(),
            min_norm,
            max_norm,
        });
    }

    sigma.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(sigma)
}

/// Count of singular values above `rel_tol` times the largest one.
///
/// `rel_tol` must lie in `(0, 1)`. The rank of a zero matrix is 0, and the
/// threshold is relative, so the result is invariant under nonzero scalar
/// multiplication of the input.
pub fn numerical_rank<T: Scalar>(m: &Matrix<T>, rel_tol: T) -> Result<usize> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return Err(KernelError::contract(
            "numerical_rank",
            format!("rel_tol must lie in (0, 1), got {}", rel_tol),
        ));
    }
    let sigma = singular_values(m)?;
    let sigma_max = sigma[0];
    if sigma_max == T::zero() {
        return Ok(0);
    }
    Ok(sigma.iter().filter(|&&s| s > rel_tol * sigma_max).count())
}
