//! Dense column-major matrix.
//!
//! Samples are columns everywhere in this crate: a feature matrix holds one
//! sample per column, so `X` is `d_x × N`. Column-major storage keeps each
//! sample contiguous.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense matrix, column-major. Feature matrices (`X`, `Y`) are instances of
/// this type with one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Alias used where the matrix specifically carries sample features.
pub type FeatureMatrix<T> = Matrix<T>;

impl<T: Real> Matrix<T> {
    /// Zero matrix. Zero-sized dimensions are permitted for internal
    /// factorization results (e.g. a rank-0 singular basis).
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds from a column-major value vector. Panics if `data` does not
    /// have exactly `rows * cols` elements.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "column-major data length {} does not match {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    /// Builds from a row-major value vector (the on-disk order).
    pub fn from_row_major(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols);
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, data[r * cols + c]);
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m.set(r, c, f(r, c));
            }
        }
        m
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r] = v;
    }

    /// Contiguous view of column `c`.
    #[inline]
    pub fn col(&self, c: usize) -> &[T] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Column-major backing slice.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Checks the feature-matrix invariants: non-empty dimensions and all
    /// values finite.
    pub fn validate_features(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Dimension(format!(
                "feature matrix must be non-empty, got {}x{}",
                self.rows, self.cols
            )));
        }
        if let Some(idx) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at row {}, col {}",
                idx % self.rows,
                idx / self.rows
            )));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    /// `self * rhs`
    pub fn mul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let rcol = rhs.col(j);
            let ocol = out.col_mut(j);
            for (l, &w) in rcol.iter().enumerate() {
                if w != T::zero() {
                    let acol = self.col(l);
                    for (o, &a) in ocol.iter_mut().zip(acol) {
                        *o += w * a;
                    }
                }
            }
        }
        out
    }

    /// `self * rhsᵀ`
    pub fn mul_transpose(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.cols, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for l in 0..self.cols {
            let acol = self.col(l);
            let bcol = rhs.col(l);
            for (j, &w) in bcol.iter().enumerate() {
                if w != T::zero() {
                    let ocol = out.col_mut(j);
                    for (o, &a) in ocol.iter_mut().zip(acol) {
                        *o += w * a;
                    }
                }
            }
        }
        out
    }

    /// `selfᵀ * rhs`
    pub fn transpose_mul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.rows, rhs.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for j in 0..rhs.cols {
            let bcol = rhs.col(j);
            for i in 0..self.cols {
                let d = dot(self.col(i), bcol);
                out.set(i, j, d);
            }
        }
        out
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Matrix<T>, scale: T) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        let mut out = self.clone();
        out.add_scaled(other, -T::one());
        out
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        let mut out = self.clone();
        out.add_scaled(other, T::one());
        out
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn scaled(&self, s: T) -> Matrix<T> {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn frob_norm(&self) -> T {
        self.data
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|v| v.abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Frobenius inner product `Σ_ij self_ij * other_ij`.
    pub fn frob_dot(&self, other: &Matrix<T>) -> T {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        dot(&self.data, &other.data)
    }

    /// Per-row sums (length `rows`).
    pub fn row_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.rows];
        for c in 0..self.cols {
            for (s, &v) in sums.iter_mut().zip(self.col(c)) {
                *s += v;
            }
        }
        sums
    }

    /// Entry-wise sign with the `sign(0) = +1` convention.
    pub fn signs(&self) -> Matrix<T> {
        let data = self
            .data
            .iter()
            .map(|&v| if v < T::zero() { -T::one() } else { T::one() })
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Keeps the listed columns, in order.
    pub fn select_cols(&self, ids: &[usize]) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows, ids.len());
        for (j, &c) in ids.iter().enumerate() {
            out.col_mut(j).copy_from_slice(self.col(c));
        }
        out
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.rows, other.rows);
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Matrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        }
    }

    /// Converts the element type.
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Squared Euclidean distance between two equally long slices.
#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}
