//! Dense row-major matrices and the small set of operations the pipeline needs.

use alloc::vec;
use alloc::vec::Vec;

use crate::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    /// `self * other`, plain triple loop in ikj order.
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == F::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += a * *s;
                }
            }
        }
        out
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = other.row(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == F::zero() {
                    continue;
                }
                let dst = out.row_mut(k);
                for (d, s) in dst.iter_mut().zip(b_row.iter()) {
                    *d += a * *s;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat<F>) {
        assert_eq!(self.data.len(), other.data.len());
        for (d, s) in self.data.iter_mut().zip(other.data.iter()) {
            *d += *s;
        }
    }

    pub fn scale(&mut self, c: F) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies rows `start..start + block.rows` from `block`.
    pub fn set_block(&mut self, start: usize, block: &Mat<F>) {
        assert_eq!(self.cols, block.cols);
        assert!(start + block.rows <= self.rows);
        let off = start * self.cols;
        self.data[off..off + block.data.len()].copy_from_slice(&block.data);
    }

    /// Extracts rows `start..start + n` as a new matrix.
    pub fn block(&self, start: usize, n: usize) -> Mat<F> {
        assert!(start + n <= self.rows);
        let off = start * self.cols;
        Mat {
            rows: n,
            cols: self.cols,
            data: self.data[off..off + n * self.cols].to_vec(),
        }
    }
}

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm2<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity with the zero-vector convention: any zero-norm operand
/// yields similarity 0.
#[inline]
pub fn cosine<F: Real>(a: &[F], b: &[F]) -> F {
    let na = norm2(a);
    let nb = norm2(b);
    if na == F::zero() || nb == F::zero() {
        F::zero()
    } else {
        dot(a, b) / (na * nb)
    }
}
