//! Self-contained dense real-matrix primitives.
//!
//! Everything downstream (attention operators, backward passes, rank and
//! cost analysis) is built from this module alone: matmul in three transpose
//! layouts, Hadamard and outer products, row softmax, the logistic map,
//! Jacobi SVD for numerical rank, and seeded deterministic initialization.
//!
//! Matrices are dense, row-major and token-major: row `t` of an `N x d`
//! matrix is the full vector for token `t` and is contiguous in memory.

pub mod flops;
mod rng;
mod svd;

pub use rng::{random_matrix, InitScheme, RngSeed};
pub use svd::{numerical_rank, singular_values};

use crate::error::{KernelError, Result};
use crate::parallel::for_each_row;
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major data. The element count must match the
    /// shape and every element must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(KernelError::contract(
                "from_vec",
                format!(
                    "data length {} does not match shape {}x{}",
                    data.len(),
                    rows,
                    cols
                ),
            ));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite {
                op: "from_vec",
                msg: format!("element {} of {}x{} input", bad, rows, cols),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::one())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Elementwise map. Does not touch the multiply counter; callers that
    /// multiply inside `f` account for it themselves.
    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.shape() != other.shape() {
            return Err(KernelError::DimMismatch {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add_in_place(&mut self, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(KernelError::DimMismatch {
                op: "add_in_place",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Elementwise product stored into `self`.
    pub fn hadamard_in_place(&mut self, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(KernelError::DimMismatch {
                op: "hadamard_in_place",
                left: self.shape(),
                right: other.shape(),
            });
        }
        flops::record_muls(self.data.len() as u64);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a * b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Matrix<T> {
        flops::record_muls(self.data.len() as u64);
        self.map(|v| v * factor)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }
}

/// `A * B` with the usual shape contract `a.cols == b.rows`.
///
/// Row-blocked i-k-j loop; output rows are computed independently, so large
/// products are split across the rayon pool when the `parallel` feature is
/// enabled. Performs exactly `a.rows * a.cols * b.cols` scalar multiplies.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(KernelError::DimMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, p, n) = (a.rows, a.cols, b.cols);
    flops::record_muls((m * p * n) as u64);
    let mut out = Matrix::zeros(m, n);
    for_each_row(&mut out.data, n.max(1), m * p * n, |i, out_row| {
        let a_row = a.row(i);
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = b.row(kk);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aik * bv;
            }
        }
    });
    Ok(out)
}

/// `A^T * B` for `A: N x p`, `B: N x q`, without materializing the transpose.
///
/// This is the token-summation form `sum_i a_i^T b_i`; it is how the
/// aggregated key-value state is built. Exactly `N * p * q` multiplies.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        return Err(KernelError::DimMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n_tokens, p, q) = (a.rows, a.cols, b.cols);
    flops::record_muls((n_tokens * p * q) as u64);
    let mut out = Matrix::zeros(p, q);
    for_each_row(&mut out.data, q.max(1), n_tokens * p * q, |kk, out_row| {
        for i in 0..n_tokens {
            let aik = a.data[i * p + kk];
            let b_row = b.row(i);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aik * bv;
            }
        }
    });
    Ok(out)
}

/// `A * B^T` for `A: m x p`, `B: n x p`. Each output element is a dot product
/// of two contiguous rows. Exactly `m * n * p` multiplies.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(KernelError::DimMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, p, n) = (a.rows, a.cols, b.rows);
    flops::record_muls((m * p * n) as u64);
    let mut out = Matrix::zeros(m, n);
    for_each_row(&mut out.data, n.max(1), m * p * n, |i, out_row| {
        let a_row = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = b.row(j);
            *o = a_row
                .iter()
                .zip(b_row)
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    });
    Ok(out)
}

/// Elementwise product of same-shape matrices.
pub fn hadamard<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.shape() != b.shape() {
        return Err(KernelError::DimMismatch {
            op: "hadamard",
            left: a.shape(),
            right: b.shape(),
        });
    }
    flops::record_muls(a.data.len() as u64);
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| x * y)
        .collect();
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// Outer product of a `d x 1` column with a `1 x e` row: a rank-<=1 `d x e`
/// matrix.
pub fn outer<T: Scalar>(col: &Matrix<T>, row: &Matrix<T>) -> Result<Matrix<T>> {
    if col.cols != 1 || row.rows != 1 {
        return Err(KernelError::DimMismatch {
            op: "outer",
            left: col.shape(),
            right: row.shape(),
        });
    }
    Ok(outer_from_slices(&col.data, &row.data))
}

pub(crate) fn outer_from_slices<T: Scalar>(col: &[T], row: &[T]) -> Matrix<T> {
    flops::record_muls((col.len() * row.len()) as u64);
    let mut data = Vec::with_capacity(col.len() * row.len());
    for &c in col {
        data.extend(row.iter().map(|&r| c * r));
    }
    Matrix {
        rows: col.len(),
        cols: row.len(),
        data,
    }
}

/// Row-wise softmax of `m / scale`, stabilized by row-max subtraction.
///
/// Because the largest shifted score is exactly zero, every row sum is at
/// least one and the division can neither overflow nor divide by zero for
/// finite input.
pub fn row_softmax<T: Scalar>(m: &Matrix<T>, scale: T) -> Result<Matrix<T>> {
    if !(scale > T::zero()) {
        return Err(KernelError::contract(
            "row_softmax",
            format!("scale must be positive, got {}", scale),
        ));
    }
    let mut out = m.clone();
    let cols = m.cols.max(1);
    for_each_row(&mut out.data, cols, m.data.len(), |_, row| {
        softmax_slice(row, scale);
    });
    Ok(out)
}

/// In-place stabilized softmax of `row / scale`. Shared with the streaming
/// softmax-attention kernel.
pub(crate) fn softmax_slice<T: Scalar>(row: &mut [T], scale: T) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = ((*v - max) / scale).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Elementwise logistic map `1 / (1 + exp(-x))`.
///
/// Outputs are clamped into the open interval `(0, 1)`: saturation at large
/// |x| would otherwise round to exactly 0 or 1.
pub fn sigmoid_map<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let two = T::one() + T::one();
    let hi = T::one() - T::epsilon() / two;
    let lo = T::min_positive_value();
    m.map(|x| {
        let s = T::one() / (T::one() + (-x).exp());
        s.max(lo).min(hi)
    })
}
